#ifndef PHOTOMASK_TESTS_SUPPORT_HPP
#define PHOTOMASK_TESTS_SUPPORT_HPP

// Shared fixtures and brute-force oracles. The oracles are written from the formulas
// directly, without calling the library routine they check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "photomask.hpp"

namespace testing_support {

using namespace photomask;

inline double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  return lo + (hi - lo) * detail::unit_uniform(rng);
}

inline ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int c) {
  ImageBuffer img(w, h, c);
  for (auto& v : img.values()) v = uniform(rng);
  return img;
}

/// Sum of a few random sinusoids, values inside [0.1, 0.9].
inline ImageBuffer smooth_image(std::mt19937_64& rng, int w, int h, int c) {
  ImageBuffer img(w, h, c);
  for (int ch = 0; ch < c; ++ch) {
    double a[3], fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      a[k] = uniform(rng, 0.5, 1.0);
      fx[k] = uniform(rng, -0.25, 0.25);
      fy[k] = uniform(rng, -0.25, 0.25);
      ph[k] = uniform(rng, 0.0, 6.283185307179586);
    }
    const double norm = a[0] + a[1] + a[2];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) v += a[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
        img(x, y, ch) = 0.5 + 0.4 * v / norm;
      }
  }
  return img;
}

inline Pose random_pose(std::mt19937_64& rng, double rot, double trans) {
  Vector6d xi;
  for (int i = 0; i < 3; ++i) xi[i] = uniform(rng, -rot, rot);
  for (int i = 3; i < 6; ++i) xi[i] = uniform(rng, -trans, trans);
  return Pose::from_tangent(xi);
}

inline DepthMap random_depth(std::mt19937_64& rng, int w, int h, double lo, double hi) {
  DepthMap d(w, h, 0.0, true);
  for (auto& v : d.values.values()) v = uniform(rng, lo, hi);
  return d;
}

inline Intrinsics small_intrinsics(int w, int h) { return {0.9 * w, 0.9 * w, 0.5 * (w - 1), 0.5 * (h - 1), w, h}; }

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("photomask_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

// ---------------------------------------------------------------------------------------
// Oracles

namespace oracle {

/// Projection written with explicit matrices.
inline bool project(double u, double v, double depth, const Pose& T, const Intrinsics& k, double& us, double& vs) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = k.fx;
  K(1, 1) = k.fy;
  K(0, 2) = k.cx;
  K(1, 2) = k.cy;
  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.topLeftCorner<3, 3>() = T.rotation;
  M.topRightCorner<3, 1>() = T.translation;
  const Eigen::Vector3d ray = K.inverse() * Eigen::Vector3d(u, v, 1.0) * depth;
  const Eigen::Vector4d q = M * Eigen::Vector4d(ray.x(), ray.y(), ray.z(), 1.0);
  if (q.z() <= 1e-9) return false;
  const Eigen::Vector3d p = K * q.head<3>();
  us = p.x() / p.z();
  vs = p.y() / p.z();
  return true;
}

/// Bilinear interpolation by explicit neighbor weights; the last row/column is reached
/// with full weight on the border sample.
inline double bilinear(const ImageBuffer& img, double u, double v, int c) {
  const int w = img.width(), h = img.height();
  auto at = [&](int x, int y) { return img(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1), c); };
  const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
  const double ax = u - x0, ay = v - y0;
  double s = 0.0;
  if ((1 - ax) * (1 - ay) != 0.0) s += (1 - ax) * (1 - ay) * at(x0, y0);
  if (ax * (1 - ay) != 0.0) s += ax * (1 - ay) * at(x0 + 1, y0);
  if ((1 - ax) * ay != 0.0) s += (1 - ax) * ay * at(x0, y0 + 1);
  if (ax * ay != 0.0) s += ax * ay * at(x0 + 1, y0 + 1);
  return s;
}

inline ImageBuffer warp(const ImageBuffer& src, const DepthMap& depth, const Pose& T, const Intrinsics& k) {
  ImageBuffer out(src.width(), src.height(), src.channels(), 0.0);
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      double us, vs;
      if (!project(x, y, depth.values(x, y), T, k, us, vs)) continue;
      if (us < 0 || vs < 0 || us > src.width() - 1 || vs > src.height() - 1) continue;
      for (int c = 0; c < src.channels(); ++c) out(x, y, c) = bilinear(src, us, vs, c);
    }
  return out;
}

inline int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

/// 3×3 uniform-window SSIM with reflect-101 padding, channel-averaged.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, int x, int y, double c1 = 1e-4, double c2 = 9e-4) {
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = reflect(x + dx, a.width()), yy = reflect(y + dy, a.height());
        const double va = a(xx, yy, c), vb = b(xx, yy, c);
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
      }
    const double ma = sa / 9, mb = sb / 9;
    const double va = saa / 9 - ma * ma, vb = sbb / 9 - mb * mb, cov = sab / 9 - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / a.channels();
}

inline double photometric(const ImageBuffer& a, const ImageBuffer& b, int x, int y, double alpha = 0.85) {
  double l1 = 0.0;
  for (int c = 0; c < a.channels(); ++c) l1 += std::abs(a(x, y, c) - b(x, y, c));
  return alpha * (1.0 - ssim(a, b, x, y)) / 2.0 + (1.0 - alpha) * l1 / a.channels();
}

inline ImageBuffer downsample(const ImageBuffer& img) {
  ImageBuffer out(img.width() / 2, img.height() / 2, img.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i) s += img(2 * x + i, 2 * y + j, c);
        out(x, y, c) = s / 4.0;
      }
  return out;
}

inline double smoothness(const InverseDepthMap& d, const ImageBuffer& img) {
  double mean = 0.0;
  for (double v : d.values()) mean += v;
  mean /= static_cast<double>(d.size());
  double sum = 0.0;
  const int w = img.width(), h = img.height(), nc = img.channels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        double g = 0.0;
        for (int c = 0; c < nc; ++c) g += std::abs(img(x + 1, y, c) - img(x, y, c));
        sum += std::abs(d(x + 1, y) - d(x, y)) / mean * std::exp(-g / nc);
      }
      if (y + 1 < h) {
        double g = 0.0;
        for (int c = 0; c < nc; ++c) g += std::abs(img(x, y + 1, c) - img(x, y, c));
        sum += std::abs(d(x, y + 1) - d(x, y)) / mean * std::exp(-g / nc);
      }
    }
  return sum / (static_cast<double>(w) * h);
}

/// Unweighted multi-scale objective with no masks: Σ_r Σ_s mean_p PE + λ Σ_r e^r L_es.
inline double unmasked_loss(const ImageBuffer& target, const std::vector<ImageBuffer>& sources,
                            const std::vector<InverseDepthMap>& inv, const std::vector<Pose>& poses,
                            const Intrinsics& k0, double lambda, double e) {
  ImageBuffer t = target;
  std::vector<ImageBuffer> src = sources;
  double loss = 0.0;
  for (std::size_t r = 0; r < inv.size(); ++r) {
    if (r > 0) {
      t = downsample(t);
      for (auto& s : src) s = downsample(s);
    }
    const double scale = std::ldexp(1.0, -static_cast<int>(r));
    Intrinsics k{k0.fx * scale, k0.fy * scale, (k0.cx + 0.5) * scale - 0.5, (k0.cy + 0.5) * scale - 0.5, t.width(),
                 t.height()};
    DepthMap depth(t.width(), t.height(), 0.0, true);
    for (std::size_t i = 0; i < depth.values.size(); ++i) depth.values[i] = 1.0 / inv[r][i];
    for (std::size_t s = 0; s < src.size(); ++s) {
      const ImageBuffer warped = warp(src[s], depth, poses[s], k);
      double sum = 0.0;
      for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) sum += photometric(t, warped, x, y);
      loss += sum / (static_cast<double>(t.width()) * t.height());
    }
    if (lambda > 0.0) loss += lambda * std::pow(e, static_cast<double>(r)) * smoothness(inv[r], t);
  }
  return loss;
}

struct Metrics {
  double abs_rel, sq_rel, rmse, rmse_log, d1, d2, d3;
  std::size_t n;
};

/// Depth metrics over pixels with gt in [lo, cap], no crop; median ratio when `scaling`.
inline Metrics depth_metrics(const DepthMap& pred, const DepthMap& gt, bool scaling, double lo = 1e-3, double cap = 80.0) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < gt.values.size(); ++i)
    if (gt.valid[i] && gt.values[i] >= lo && gt.values[i] <= cap) idx.push_back(i);
  double s = 1.0;
  if (scaling) {
    auto med = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    std::vector<double> g, p;
    for (auto i : idx) {
      g.push_back(gt.values[i]);
      p.push_back(pred.values[i]);
    }
    s = med(g) / med(p);
  }
  Metrics m{};
  for (auto i : idx) {
    const double p = std::min(std::max(pred.values[i] * s, lo), cap), g = gt.values[i];
    m.abs_rel += std::abs(p - g) / g;
    m.sq_rel += (p - g) * (p - g) / g;
    m.rmse += (p - g) * (p - g);
    m.rmse_log += std::pow(std::log(p / g), 2);
    const double r = std::max(p / g, g / p);
    m.d1 += r < 1.25;
    m.d2 += r < 1.5625;
    m.d3 += r < 1.953125;
  }
  const double n = static_cast<double>(idx.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.d1 /= n;
  m.d2 /= n;
  m.d3 /= n;
  m.n = idx.size();
  return m;
}

/// Snippet ATE via 4×4 homogeneous matrices.
inline std::pair<double, double> ate(const std::vector<Pose>& pred, const std::vector<Pose>& gt, int snippet) {
  auto mat = [](const Pose& p) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = p.rotation;
    m.topRightCorner<3, 1>() = p.translation;
    return m;
  };
  std::vector<double> errs;
  for (std::size_t s = 0; s + snippet <= gt.size(); ++s) {
    const Eigen::Matrix4d ap = mat(pred[s]).inverse(), ag = mat(gt[s]).inverse();
    Eigen::MatrixXd P(3, snippet), G(3, snippet);
    for (int i = 0; i < snippet; ++i) {
      P.col(i) = (ap * mat(pred[s + i])).topRightCorner<3, 1>();
      G.col(i) = (ag * mat(gt[s + i])).topRightCorner<3, 1>();
    }
    const double pp = (P.array() * P.array()).sum();
    const double scale = pp > 0 ? (G.array() * P.array()).sum() / pp : 1.0;
    errs.push_back((scale * P - G).colwise().norm().mean());
  }
  double mean = 0.0;
  for (double e : errs) mean += e;
  mean /= static_cast<double>(errs.size());
  double var = 0.0;
  for (double e : errs) var += (e - mean) * (e - mean);
  return {mean, std::sqrt(var / static_cast<double>(errs.size()))};
}

}  // namespace oracle

}  // namespace testing_support

#endif  // PHOTOMASK_TESTS_SUPPORT_HPP

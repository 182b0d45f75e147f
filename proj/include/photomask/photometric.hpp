#ifndef PHOTOMASK_PHOTOMETRIC_HPP
#define PHOTOMASK_PHOTOMETRIC_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "photomask/error.hpp"
#include "photomask/image.hpp"

namespace photomask {

enum class SsimWindow { uniform, gaussian };

struct PhotometricConfig {
  double alpha = 0.85;
  int ssim_window = 3;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  SsimWindow weighting = SsimWindow::uniform;
  double gaussian_sigma = 1.5;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::invalid_argument, "alpha must lie in [0,1]");
    if (ssim_window < 3 || ssim_window % 2 == 0)
      throw Error(Errc::invalid_argument, "ssim_window must be odd and >= 3");
    if (!(c1 > 0.0 && c2 > 0.0)) throw Error(Errc::invalid_argument, "SSIM constants must be positive");
    if (weighting == SsimWindow::gaussian && !(gaussian_sigma > 0.0))
      throw Error(Errc::invalid_argument, "gaussian_sigma must be positive");
  }
};

/// Per-pixel photometric error with its validity.
struct ErrorMap {
  Grid<double> values;
  MaskMap valid;
};

namespace detail {

/// Reflect-101 border handling (edge pixel not repeated).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

struct WindowTap {
  int dx, dy;
  double weight;
};

inline std::vector<WindowTap> ssim_taps(const PhotometricConfig& cfg) {
  const int r = cfg.ssim_window / 2;
  std::vector<WindowTap> taps;
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      double w = 1.0;
      if (cfg.weighting == SsimWindow::gaussian) {
        const double s2 = cfg.gaussian_sigma * cfg.gaussian_sigma;
        w = std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
      }
      taps.push_back({dx, dy, w});
      total += w;
    }
  }
  for (auto& t : taps) t.weight /= total;
  return taps;
}

struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

inline WindowStats window_stats(const ImageBuffer& a, const ImageBuffer& b, const std::vector<WindowTap>& taps,
                                int x, int y, int c) {
  const int w = a.width(), h = a.height();
  WindowStats s{0, 0, 0, 0, 0};
  for (const auto& t : taps) {
    const int qx = reflect_index(x + t.dx, w), qy = reflect_index(y + t.dy, h);
    s.mu_a += t.weight * a(qx, qy, c);
    s.mu_b += t.weight * b(qx, qy, c);
  }
  for (const auto& t : taps) {
    const int qx = reflect_index(x + t.dx, w), qy = reflect_index(y + t.dy, h);
    const double da = a(qx, qy, c) - s.mu_a, db = b(qx, qy, c) - s.mu_b;
    s.var_a += t.weight * (da * da);
    s.var_b += t.weight * (db * db);
    s.cov += t.weight * (da * db);
  }
  return s;
}

inline double ssim_value(const WindowStats& s, const PhotometricConfig& cfg) {
  const double num = (2.0 * (s.mu_a * s.mu_b) + cfg.c1) * (2.0 * s.cov + cfg.c2);
  const double den = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + cfg.c1) * (s.var_a + s.var_b + cfg.c2);
  return num / den;
}

inline void check_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw Error(Errc::bad_shape, "images differ in shape");
}

}  // namespace detail

/// Local-window SSIM per pixel, averaged over channels.
inline Grid<double> ssim_map(const ImageBuffer& a, const ImageBuffer& b, const PhotometricConfig& cfg = {}) {
  detail::check_same_shape(a, b);
  cfg.validate();
  const auto taps = detail::ssim_taps(cfg);
  Grid<double> out(a.width(), a.height(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < a.channels(); ++c) acc += detail::ssim_value(detail::window_stats(a, b, taps, x, y, c), cfg);
      out(x, y) = acc / a.channels();
    }
  }
  return out;
}

/// α·(1−SSIM)/2 + (1−α)·mean_c|a−b|. All pixels are marked valid.
inline ErrorMap photometric_error(const ImageBuffer& a, const ImageBuffer& b, const PhotometricConfig& cfg = {}) {
  const Grid<double> ssim = ssim_map(a, b, cfg);
  ErrorMap err{Grid<double>(a.width(), a.height(), 0.0), MaskMap(a.width(), a.height(), 1)};
  const int nc = a.channels();
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double l1 = 0.0;
      for (int c = 0; c < nc; ++c) l1 += std::abs(a(x, y, c) - b(x, y, c));
      const double dssim = std::clamp((1.0 - ssim(x, y)) * 0.5, 0.0, 1.0);
      err.values(x, y) = cfg.alpha * dssim + (1.0 - cfg.alpha) * (l1 / nc);
    }
  }
  return err;
}

/// Gradient of Σ_p weights(p)·PE(a, b)(p) with respect to every pixel of `b`.
inline ImageBuffer photometric_error_backward(const ImageBuffer& a, const ImageBuffer& b, const Grid<double>& weights,
                                              const PhotometricConfig& cfg = {}) {
  detail::check_same_shape(a, b);
  if (weights.width() != a.width() || weights.height() != a.height())
    throw Error(Errc::bad_shape, "weight map differs in shape");
  cfg.validate();
  const auto taps = detail::ssim_taps(cfg);
  const int w = a.width(), h = a.height(), nc = a.channels();
  ImageBuffer grad(w, h, nc, 0.0);
  const double l1_scale = (1.0 - cfg.alpha) / nc;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double wp = weights(x, y);
      if (wp == 0.0) continue;
      for (int c = 0; c < nc; ++c) {
        const double diff = b(x, y, c) - a(x, y, c);
        grad(x, y, c) += wp * l1_scale * ((diff > 0.0) - (diff < 0.0));
      }
      if (cfg.alpha == 0.0) continue;
      // SSIM is averaged over channels before the clamp, so the clamp gate is per pixel.
      std::vector<detail::WindowStats> stats(nc);
      double ssim = 0.0;
      for (int c = 0; c < nc; ++c) {
        stats[c] = detail::window_stats(a, b, taps, x, y, c);
        ssim += detail::ssim_value(stats[c], cfg);
      }
      ssim /= nc;
      if (ssim < -1.0 || ssim > 1.0) continue;  // clamp inactive region has zero slope
      const double g = wp * (-0.5 * cfg.alpha) / nc;
      for (int c = 0; c < nc; ++c) {
        const auto& s = stats[c];
        const double num_a = 2.0 * (s.mu_a * s.mu_b) + cfg.c1;
        const double num_b = 2.0 * s.cov + cfg.c2;
        const double den_c = s.mu_a * s.mu_a + s.mu_b * s.mu_b + cfg.c1;
        const double den_d = s.var_a + s.var_b + cfg.c2;
        const double sv = num_a * num_b / (den_c * den_d);
        const double d_mu = 2.0 * s.mu_a * num_b / (den_c * den_d) - sv * 2.0 * s.mu_b / den_c;
        const double d_cov = 2.0 * num_a / (den_c * den_d);
        const double d_var = -sv / den_d;
        for (const auto& t : taps) {
          const int qx = detail::reflect_index(x + t.dx, w), qy = detail::reflect_index(y + t.dy, h);
          const double local = d_mu + d_var * 2.0 * (b(qx, qy, c) - s.mu_b) + d_cov * (a(qx, qy, c) - s.mu_a);
          grad(qx, qy, c) += g * t.weight * local;
        }
      }
    }
  }
  return grad;
}

namespace detail {

struct EdgeWeights {
  Grid<double> wx;  // e^{-|∂x I|}, last column unused
  Grid<double> wy;  // e^{-|∂y I|}, last row unused
};

inline EdgeWeights edge_weights(const ImageBuffer& image) {
  const int w = image.width(), h = image.height(), nc = image.channels();
  EdgeWeights e{Grid<double>(w, h, 0.0), Grid<double>(w, h, 0.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        double g = 0.0;
        for (int c = 0; c < nc; ++c) g += std::abs(image(x + 1, y, c) - image(x, y, c));
        e.wx(x, y) = std::exp(-g / nc);
      }
      if (y + 1 < h) {
        double g = 0.0;
        for (int c = 0; c < nc; ++c) g += std::abs(image(x, y + 1, c) - image(x, y, c));
        e.wy(x, y) = std::exp(-g / nc);
      }
    }
  }
  return e;
}

inline double mean_inverse_depth(const InverseDepthMap& inv, const ImageBuffer& image) {
  if (inv.width() != image.width() || inv.height() != image.height())
    throw Error(Errc::bad_shape, "inverse depth and image differ in shape");
  if (inv.empty()) throw Error(Errc::bad_shape, "empty inverse depth map");
  double sum = 0.0;
  for (double v : inv.values()) sum += v;
  const double mean = sum / static_cast<double>(inv.size());
  if (!(mean > 0.0)) throw Error(Errc::degenerate_depth, "mean inverse depth must be positive");
  return mean;
}

}  // namespace detail

/// Edge-aware smoothness of the mean-normalized inverse depth d* = d / mean(d). Forward
/// differences; the sum of both directions is divided by the pixel count.
inline double smoothness_loss(const InverseDepthMap& inv_depth, const ImageBuffer& image) {
  const double mean = detail::mean_inverse_depth(inv_depth, image);
  const auto e = detail::edge_weights(image);
  const int w = image.width(), h = image.height();
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = inv_depth(x, y) / mean;
      if (x + 1 < w) sum += std::abs(inv_depth(x + 1, y) / mean - d) * e.wx(x, y);
      if (y + 1 < h) sum += std::abs(inv_depth(x, y + 1) / mean - d) * e.wy(x, y);
    }
  }
  return sum / static_cast<double>(inv_depth.size());
}

/// Gradient of smoothness_loss with respect to the (unnormalized) inverse depth.
inline InverseDepthMap smoothness_backward(const InverseDepthMap& inv_depth, const ImageBuffer& image) {
  const double mean = detail::mean_inverse_depth(inv_depth, image);
  const auto e = detail::edge_weights(image);
  const int w = image.width(), h = image.height();
  const double n = static_cast<double>(inv_depth.size());
  InverseDepthMap g_star(w, h, 0.0);  // ∂L/∂d*
  auto sgn = [](double v) { return double((v > 0.0) - (v < 0.0)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = inv_depth(x, y) / mean;
      if (x + 1 < w) {
        const double s = sgn(inv_depth(x + 1, y) / mean - d) * e.wx(x, y) / n;
        g_star(x + 1, y) += s;
        g_star(x, y) -= s;
      }
      if (y + 1 < h) {
        const double s = sgn(inv_depth(x, y + 1) / mean - d) * e.wy(x, y) / n;
        g_star(x, y + 1) += s;
        g_star(x, y) -= s;
      }
    }
  }
  // d*_i = d_i / mean(d): ∂L/∂d_j = g*_j / mean − Σ_i g*_i d*_i / (N·mean).
  double coupling = 0.0;
  for (std::size_t i = 0; i < g_star.size(); ++i) coupling += g_star[i] * (inv_depth[i] / mean);
  InverseDepthMap grad(w, h, 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = g_star[i] / mean - coupling / (n * mean);
  return grad;
}

/// 2×2 box-average pyramid; level r has size (H/2^r, W/2^r).
inline std::vector<ImageBuffer> build_pyramid(const ImageBuffer& img, int levels) {
  if (levels < 1) throw Error(Errc::invalid_argument, "levels must be >= 1");
  const int factor = 1 << (levels - 1);
  if (img.width() % factor != 0 || img.height() % factor != 0)
    throw Error(Errc::bad_shape, "image dimensions not divisible by 2^(levels-1)");
  std::vector<ImageBuffer> pyr{img};
  for (int r = 1; r < levels; ++r) {
    const ImageBuffer& fine = pyr.back();
    ImageBuffer coarse(fine.width() / 2, fine.height() / 2, fine.channels());
    for (int y = 0; y < coarse.height(); ++y)
      for (int x = 0; x < coarse.width(); ++x)
        for (int c = 0; c < fine.channels(); ++c)
          coarse(x, y, c) = 0.25 * (fine(2 * x, 2 * y, c) + fine(2 * x + 1, 2 * y, c) + fine(2 * x, 2 * y + 1, c) +
                                    fine(2 * x + 1, 2 * y + 1, c));
    pyr.push_back(std::move(coarse));
  }
  return pyr;
}

}  // namespace photomask

#endif  // PHOTOMASK_PHOTOMETRIC_HPP

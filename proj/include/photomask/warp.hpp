#ifndef PHOTOMASK_WARP_HPP
#define PHOTOMASK_WARP_HPP

#include <cmath>
#include <span>
#include <vector>

#include "photomask/geometry.hpp"
#include "photomask/image.hpp"
#include "photomask/parallel.hpp"

namespace photomask {

namespace detail {

/// Interpolation cell of a point on the closed support. The cell origin is clamped so the
/// last row/column is reached with weight 1 on the far corner; for 1-pixel-wide axes the
/// second neighbor collapses onto the first.
struct BilinearCell {
  int x0, y0, x1, y1;
  double ax, ay;
};

inline BilinearCell make_cell(const PixelCoord& p, int width, int height) {
  BilinearCell c{};
  c.x0 = width > 1 ? std::min(static_cast<int>(std::floor(p.u)), width - 2) : 0;
  c.y0 = height > 1 ? std::min(static_cast<int>(std::floor(p.v)), height - 2) : 0;
  c.x1 = std::min(c.x0 + 1, width - 1);
  c.y1 = std::min(c.y0 + 1, height - 1);
  c.ax = width > 1 ? p.u - c.x0 : 0.0;
  c.ay = height > 1 ? p.v - c.y0 : 0.0;
  return c;
}

inline void sample_cell(const ImageBuffer& img, const BilinearCell& c, std::span<double> out) {
  const double w00 = (1.0 - c.ax) * (1.0 - c.ay);
  const double w10 = c.ax * (1.0 - c.ay);
  const double w01 = (1.0 - c.ax) * c.ay;
  const double w11 = c.ax * c.ay;
  for (int ch = 0; ch < img.channels(); ++ch) {
    out[ch] = w00 * img(c.x0, c.y0, ch) + w10 * img(c.x1, c.y0, ch) + w01 * img(c.x0, c.y1, ch) +
              w11 * img(c.x1, c.y1, ch);
  }
}

/// Image gradient w.r.t. (u, v) inside a fixed cell.
inline void cell_gradient(const ImageBuffer& img, const BilinearCell& c, std::span<double> du,
                          std::span<double> dv) {
  for (int ch = 0; ch < img.channels(); ++ch) {
    const double i00 = img(c.x0, c.y0, ch), i10 = img(c.x1, c.y0, ch);
    const double i01 = img(c.x0, c.y1, ch), i11 = img(c.x1, c.y1, ch);
    du[ch] = c.x1 != c.x0 ? (1.0 - c.ay) * (i10 - i00) + c.ay * (i11 - i01) : 0.0;
    dv[ch] = c.y1 != c.y0 ? (1.0 - c.ax) * (i01 - i00) + c.ax * (i11 - i10) : 0.0;
  }
}

}  // namespace detail

/// Four-neighbor bilinear interpolation, one value per channel.
/// Throws Errc::out_of_bounds outside [0, W−1]×[0, H−1].
inline std::vector<double> bilinear_sample(const ImageBuffer& img, const PixelCoord& p) {
  if (!in_image_box(p, img.width(), img.height()))
    throw Error(Errc::out_of_bounds, "sample point outside image support");
  std::vector<double> out(static_cast<std::size_t>(img.channels()));
  detail::sample_cell(img, detail::make_cell(p, img.width(), img.height()), out);
  return out;
}

struct WarpResult {
  ImageBuffer image;         // I_{s→t}; 0 where !in_bounds
  MaskMap in_bounds;
  Grid<PixelCoord> coords;   // sampling locations p_s
};

/// Per-pixel derivatives of the synthesized intensity.
struct WarpJacobians {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> d_depth;  // (y, x, c)
  std::vector<double> d_pose;   // (y, x, c, j), j over (ω, t) of a left perturbation

  WarpJacobians() = default;
  WarpJacobians(int w, int h, int c)
      : width(w), height(h), channels(c),
        d_depth(static_cast<std::size_t>(w) * h * c, 0.0),
        d_pose(static_cast<std::size_t>(w) * h * c * 6, 0.0) {}

  double& depth(int x, int y, int c) { return d_depth[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double depth(int x, int y, int c) const {
    return d_depth[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::span<double, 6> pose(int x, int y, int c) {
    return std::span<double, 6>(d_pose.data() + ((static_cast<std::size_t>(y) * width + x) * channels + c) * 6, 6);
  }
  std::span<const double, 6> pose(int x, int y, int c) const {
    return std::span<const double, 6>(d_pose.data() + ((static_cast<std::size_t>(y) * width + x) * channels + c) * 6,
                                      6);
  }
};

namespace detail {

inline void check_warp_inputs(const ImageBuffer& source, const DepthMap& depth, const Intrinsics& k) {
  if (source.width() != k.width || source.height() != k.height)
    throw Error(Errc::bad_shape, "source image does not match intrinsics");
  if (depth.width() != k.width || depth.height() != k.height)
    throw Error(Errc::bad_shape, "depth map does not match intrinsics");
}

inline void warp_impl(const ImageBuffer& source, const DepthMap& depth, const Pose& pose, const Intrinsics& k,
                      WarpResult& result, WarpJacobians* jac, int threads) {
  check_warp_inputs(source, depth, k);
  const int w = k.width, h = k.height, nc = source.channels();
  result.image = ImageBuffer(w, h, nc, 0.0);
  result.in_bounds = MaskMap(w, h, 0);
  result.coords = Grid<PixelCoord>(w, h, PixelCoord{0.0, 0.0});
  if (jac) *jac = WarpJacobians(w, h, nc);
  const bool identity = pose.is_identity();

  for_each_row(h, threads, [&](int y) {
    std::vector<double> du(nc), dv(nc);
    for (int x = 0; x < w; ++x) {
      const double d = depth.values(x, y);
      if (!depth.valid(x, y) || !(d > 0.0)) continue;
      const PixelCoord pt{double(x), double(y)};
      const Eigen::Vector3d ray = pose.rotation * k.unproject(pt, 1.0);
      const Eigen::Vector3d xs = ray * d + pose.translation;
      const auto ps = identity ? std::optional<PixelCoord>(pt) : project_point(xs, k);
      if (!ps) continue;
      result.coords(x, y) = *ps;
      if (!in_image_box(*ps, w, h)) continue;
      result.in_bounds(x, y) = 1;
      const BilinearCell cell = make_cell(*ps, w, h);
      sample_cell(source, cell, result.image.pixel(x, y));
      if (!jac) continue;

      cell_gradient(source, cell, du, dv);
      const double iz = 1.0 / xs.z();
      // dp/dX for the pinhole projection.
      Eigen::Matrix<double, 2, 3> dp_dx;
      dp_dx << k.fx * iz, 0.0, -k.fx * xs.x() * iz * iz, 0.0, k.fy * iz, -k.fy * xs.y() * iz * iz;
      // dX/dξ for X' = exp(ω)·X + v at ξ = 0.
      Eigen::Matrix<double, 3, 6> dx_dxi;
      dx_dxi.leftCols<3>() = -skew(xs);
      dx_dxi.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Vector2d dp_dd = dp_dx * ray;
      const Eigen::Matrix<double, 2, 6> dp_dxi = dp_dx * dx_dxi;
      for (int c = 0; c < nc; ++c) {
        jac->depth(x, y, c) = du[c] * dp_dd.x() + dv[c] * dp_dd.y();
        auto out = jac->pose(x, y, c);
        for (int j = 0; j < 6; ++j) out[j] = du[c] * dp_dxi(0, j) + dv[c] * dp_dxi(1, j);
      }
    }
  });
}

}  // namespace detail

/// Inverse warp I_{s→t}(p) = I_s⟨proj(D(p), T_{t→s}, K)⟩. Pixels with invalid depth,
/// behind the camera, or outside the source box get intensity 0 and in_bounds = false.
inline WarpResult synthesize_view(const ImageBuffer& source, const DepthMap& depth, const Pose& pose,
                                  const Intrinsics& k, int threads = 1) {
  WarpResult result;
  detail::warp_impl(source, depth, pose, k, result, nullptr, threads);
  return result;
}

/// Synthesized view plus analytic ∂I/∂D and ∂I/∂ξ, holding each pixel's interpolation cell fixed.
inline WarpResult synthesize_view(const ImageBuffer& source, const DepthMap& depth, const Pose& pose,
                                  const Intrinsics& k, WarpJacobians& jacobians, int threads = 1) {
  WarpResult result;
  detail::warp_impl(source, depth, pose, k, result, &jacobians, threads);
  return result;
}

inline WarpJacobians warp_jacobians(const ImageBuffer& source, const DepthMap& depth, const Pose& pose,
                                    const Intrinsics& k, int threads = 1) {
  WarpJacobians jac;
  synthesize_view(source, depth, pose, k, jac, threads);
  return jac;
}

}  // namespace photomask

#endif  // PHOTOMASK_WARP_HPP

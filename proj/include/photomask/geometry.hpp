#ifndef PHOTOMASK_GEOMETRY_HPP
#define PHOTOMASK_GEOMETRY_HPP

#include <cmath>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "photomask/error.hpp"
#include "photomask/image.hpp"

namespace photomask {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Points with transformed depth at or below this are treated as behind the camera.
inline constexpr double kBehindCameraZ = 1e-9;

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Pinhole intrinsics without distortion.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 2;
  int height = 2;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw Error(Errc::invalid_argument, "focal lengths must be positive");
    if (width < 2 || height < 2) throw Error(Errc::invalid_argument, "image must be at least 2x2");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      throw Error(Errc::invalid_argument, "principal point outside image");
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  /// Intrinsics of pyramid level `level`, where each level halves the resolution by 2×2
  /// box averaging. Pixel centers of the coarse grid sit at the centroid of their block.
  Intrinsics scaled(int level) const {
    const double s = std::ldexp(1.0, -level);
    Intrinsics k;
    k.fx = fx * s;
    k.fy = fy * s;
    k.cx = (cx + 0.5) * s - 0.5;
    k.cy = (cy + 0.5) * s - 0.5;
    k.width = width >> level;
    k.height = height >> level;
    return k;
  }

  Eigen::Vector3d unproject(const PixelCoord& p, double depth) const {
    return {(p.u - cx) / fx * depth, (p.v - cy) / fy * depth, depth};
  }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

/// Rotation from an axis-angle vector. Below 1e-8 rad the first-order expansion is used.
inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-8) return Eigen::Matrix3d::Identity() + skew(omega);
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  if (std::abs(aa.angle()) < 1e-8) {
    return {0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)), 0.5 * (r(1, 0) - r(0, 1))};
  }
  return aa.angle() * aa.axis();
}

/// Rigid transform x' = R·x + t. As T_{t→s} it maps target-camera points into the source camera.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  static Pose from_translation(const Eigen::Vector3d& t) { return {Eigen::Matrix3d::Identity(), t}; }

  /// (axis-angle, translation) 6-vector to pose.
  static Pose from_tangent(const Vector6d& xi) {
    return {so3_exp(xi.head<3>()), xi.tail<3>()};
  }

  Vector6d to_tangent() const {
    Vector6d xi;
    xi.head<3>() = so3_log(rotation);
    xi.tail<3>() = translation;
    return xi;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return rotation * x + translation; }

  bool is_identity() const {
    return rotation == Eigen::Matrix3d::Identity() && translation == Eigen::Vector3d::Zero();
  }

  bool is_valid(double tol = 1e-9) const {
    const double orth = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return orth <= tol && std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }
};

/// a∘b: applies b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose invert(const Pose& a) {
  const Eigen::Matrix3d rt = a.rotation.transpose();
  return {rt, -rt * a.translation};
}

/// Left perturbation exp(delta)∘pose, where delta = (axis-angle, translation).
/// Pose Jacobians throughout the library are taken with respect to this delta at zero.
inline Pose retract(const Pose& pose, const Vector6d& delta) {
  return compose(Pose::from_tangent(delta), pose);
}

/// Target-camera point of pixel `p_t` at `depth`, moved into the source camera.
inline Eigen::Vector3d transform_pixel(const PixelCoord& p_t, double depth, const Pose& pose,
                                       const Intrinsics& k) {
  return pose * k.unproject(p_t, depth);
}

/// Perspective projection of a camera-frame point; nullopt when behind the camera.
inline std::optional<PixelCoord> project_point(const Eigen::Vector3d& x, const Intrinsics& k) {
  if (!(x.z() > kBehindCameraZ)) return std::nullopt;
  const PixelCoord p{k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
  if (!std::isfinite(p.u) || !std::isfinite(p.v)) return std::nullopt;
  return p;
}

/// p_s ≃ K·T·D(p_t)·K⁻¹·p_t. nullopt signals behind-camera. The result may fall outside
/// the image; bounds are checked by callers.
inline std::optional<PixelCoord> project(const PixelCoord& p_t, double depth, const Pose& pose,
                                         const Intrinsics& k) {
  if (!(depth > 0.0)) throw Error(Errc::invalid_argument, "depth must be positive");
  if (pose.is_identity()) return p_t;
  return project_point(transform_pixel(p_t, depth, pose, k), k);
}

/// Closed box [0, W−1]×[0, H−1], the support of the bilinear sampler.
inline bool in_image_box(const PixelCoord& p, int width, int height) {
  return p.u >= 0.0 && p.u <= width - 1 && p.v >= 0.0 && p.v <= height - 1;
}

/// True where the target pixel lands inside the source image box in front of the camera.
inline MaskMap principled_mask(const DepthMap& depth, const Pose& pose, const Intrinsics& k) {
  if (depth.width() != k.width || depth.height() != k.height)
    throw Error(Errc::bad_shape, "depth map does not match intrinsics");
  MaskMap mask(k.width, k.height, 0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const double d = depth.values(x, y);
      if (!depth.valid(x, y) || !(d > 0.0)) continue;
      const auto p = project(PixelCoord{double(x), double(y)}, d, pose, k);
      mask(x, y) = (p && in_image_box(*p, k.width, k.height)) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace photomask

#endif  // PHOTOMASK_GEOMETRY_HPP

#ifndef PHOTOMASK_SCENESIM_HPP
#define PHOTOMASK_SCENESIM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "photomask/geometry.hpp"
#include "photomask/image.hpp"
#include "photomask/random.hpp"

namespace photomask {

enum class MotionLabel : std::uint8_t { background = 0, co_dir = 1, contra_dir = 2, slow = 3, static_object = 4 };

inline constexpr int kNumMotionLabels = 5;

inline const char* motion_label_name(MotionLabel label) {
  switch (label) {
    case MotionLabel::background: return "background";
    case MotionLabel::co_dir: return "co_dir";
    case MotionLabel::contra_dir: return "contra_dir";
    case MotionLabel::slow: return "slow";
    case MotionLabel::static_object: return "static_object";
  }
  return "unknown";
}

inline std::optional<MotionLabel> motion_label_from_name(const std::string& name) {
  for (int i = 0; i < kNumMotionLabels; ++i)
    if (name == motion_label_name(static_cast<MotionLabel>(i))) return static_cast<MotionLabel>(i);
  return std::nullopt;
}

/// Band-limited procedural texture: mean + contrast·n, n ∈ [−1, 1] a normalized sum of four
/// seeded sinusoids along each axis. Objects use surface (x, y) in meters; the environment uses a
/// solid texture over world (x, y, z) so the wall and ground meet without a seam.
struct TextureSpec {
  std::uint64_t seed = 1;
  double frequency = 1.0;  // cycles per meter
  double mean = 0.5;
  double contrast = 0.4;
  double z_scale = 1.0;  // frequency factor along world z, solid textures only
};

struct BackgroundSpec {
  double distance = 6.0;                // fronto-parallel wall, meters along the target optical axis
  std::optional<double> ground_height;  // ground plane y = h in the target frame (image-down axis)
  TextureSpec texture;
};

enum class ObjectShape { rectangle, disk };

/// Fronto-parallel planar sprite. Position and depth refer to the target frame.
struct ObjectSpec {
  ObjectShape shape = ObjectShape::rectangle;
  double size_x = 1.0;  // width, or diameter for disks
  double size_y = 1.0;
  double x = 0.0;
  double y = 0.0;
  double depth = 3.0;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // meters per frame
  MotionLabel label = MotionLabel::static_object;
  TextureSpec texture;
};

struct SceneSpec {
  Intrinsics intrinsics{100.0, 100.0, 63.5, 47.5, 128, 96};
  int channels = 3;
  BackgroundSpec background;
  std::vector<ObjectSpec> objects;
  Pose camera_motion;  // camera k+1 expressed in camera k
  std::vector<int> frames{-1, 0, 1};
  int target_frame = 0;

  void validate() const {
    try {
      intrinsics.validate();
    } catch (const Error& e) {
      throw Error(Errc::bad_spec, e.what());
    }
    if (channels < 1) throw Error(Errc::bad_spec, "channels must be >= 1");
    if (!(background.distance > 0.0)) throw Error(Errc::bad_spec, "background distance must be positive");
    if (background.ground_height && !(*background.ground_height > 0.0))
      throw Error(Errc::bad_spec, "ground height must be positive");
    if (!camera_motion.is_valid()) throw Error(Errc::bad_spec, "camera motion is not a rigid transform");
    auto check_texture = [](const TextureSpec& t) {
      if (!(t.mean - t.contrast >= 0.0 && t.mean + t.contrast <= 1.0 && t.contrast >= 0.0))
        throw Error(Errc::bad_spec, "texture values must stay within [0,1]");
      if (!(t.z_scale >= 0.0)) throw Error(Errc::bad_spec, "texture z scale must be non-negative");
      if (!(t.frequency > 0.0)) throw Error(Errc::bad_spec, "texture frequency must be positive");
    };
    check_texture(background.texture);
    for (const auto& o : objects) {
      if (!(o.depth > 0.0)) throw Error(Errc::bad_spec, "object depth must be positive");
      if (!(o.depth < background.distance)) throw Error(Errc::bad_spec, "object lies behind the background");
      if (!(o.size_x > 0.0 && o.size_y > 0.0)) throw Error(Errc::bad_spec, "object size must be positive");
      if (!o.velocity.allFinite()) throw Error(Errc::bad_spec, "object velocity must be finite");
      check_texture(o.texture);
    }
    bool has_target = false;
    for (int f : frames) has_target |= (f == target_frame);
    if (!has_target || frames.size() < 2) throw Error(Errc::bad_spec, "frames must include the target and a source");
  }
};

/// Rendered frames with ground truth. Sources are the non-target frames in spec order.
struct RenderedSample {
  std::vector<int> frames;
  int target_index = 0;
  std::vector<ImageBuffer> images;   // per frame
  std::vector<DepthMap> gt_depth;    // per frame
  std::vector<Pose> gt_poses;        // T_{t→s} per source
  std::vector<MaskMap> occlusion;    // per source: target pixels hidden in that source
  LabelMap motion_labels;            // target frame

  const ImageBuffer& target() const { return images.at(target_index); }
  std::vector<int> source_indices() const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i)
      if (i != target_index) idx.push_back(i);
    return idx;
  }
  std::vector<ImageBuffer> sources() const {
    std::vector<ImageBuffer> out;
    for (int i : source_indices()) out.push_back(images[i]);
    return out;
  }
};

namespace detail {

class ProceduralTexture {
 public:
  ProceduralTexture(const TextureSpec& spec, int channels, int axes = 2) : spec_(spec) {
    const double two_pi = 2.0 * std::numbers::pi;
    for (int c = 0; c < channels; ++c) {
      std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(c) * 0xBF58476D1CE4E5B9ULL);
      Channel ch;
      double total = 0.0;
      for (int i = 0; i < 4 * axes; ++i) {
        Wave w;
        w.amplitude = 0.5 + 0.5 * unit_uniform(rng);
        const double frequency = spec.frequency * (0.6 + unit_uniform(rng));
        Eigen::Vector3d dir;
        const double phi = two_pi * unit_uniform(rng);
        if (axes == 2) {
          dir = {std::cos(phi), std::sin(phi), 0.0};
        } else {
          const double z = 2.0 * unit_uniform(rng) - 1.0, r = std::sqrt(1.0 - z * z);
          dir = {r * std::cos(phi), r * std::sin(phi), z * spec.z_scale};
        }
        w.wavevector = two_pi * frequency * dir;
        w.phase = two_pi * unit_uniform(rng);
        total += w.amplitude;
        ch.waves.push_back(w);
      }
      ch.norm = 1.0 / total;
      channels_.push_back(std::move(ch));
    }
  }

  double value(const Eigen::Vector3d& p, int c) const {
    const Channel& ch = channels_[c];
    double n = 0.0;
    for (const Wave& w : ch.waves) n += w.amplitude * std::sin(w.wavevector.dot(p) + w.phase);
    return spec_.mean + spec_.contrast * n * ch.norm;
  }

 private:
  struct Wave {
    double amplitude;
    Eigen::Vector3d wavevector;
    double phase;
  };
  struct Channel {
    std::vector<Wave> waves;
    double norm = 1.0;
  };
  TextureSpec spec_;
  std::vector<Channel> channels_;
};

struct Hit {
  double depth = 0.0;           // z in the casting camera
  int entity = -1;              // −1 wall, −2 ground, otherwise object index
  Eigen::Vector3d point;        // world point at the frame's time
};

class SceneRenderer {
 public:
  explicit SceneRenderer(const SceneSpec& spec) : spec_(spec), background_(spec.background.texture, spec.channels, 3) {
    spec.validate();
    for (const auto& o : spec.objects) objects_.emplace_back(o.texture, spec.channels);
  }

  /// Camera-to-world pose of frame index `tau` relative to the target (world = target camera).
  Pose camera_pose(int tau) const {
    Pose p = Pose::identity();
    const Pose step = tau >= 0 ? spec_.camera_motion : invert(spec_.camera_motion);
    for (int i = 0; i < std::abs(tau); ++i) p = compose(p, step);
    return p;
  }

  Eigen::Vector3d object_center(int index, int tau) const {
    const ObjectSpec& o = spec_.objects[index];
    return Eigen::Vector3d(o.x, o.y, o.depth) + o.velocity * static_cast<double>(tau);
  }

  std::optional<Hit> cast(const Pose& camera, int tau, const PixelCoord& p) const {
    const Eigen::Vector3d dir = camera.rotation * spec_.intrinsics.unproject(p, 1.0);
    const Eigen::Vector3d& origin = camera.translation;
    std::optional<Hit> best;
    auto consider = [&](int axis, double plane, int entity) -> std::optional<Eigen::Vector3d> {
      if (std::abs(dir[axis]) < 1e-12) return std::nullopt;
      const double lambda = (plane - origin[axis]) / dir[axis];
      if (!(lambda > 0.0)) return std::nullopt;
      if (best && lambda >= best->depth) return std::nullopt;
      const Eigen::Vector3d point = origin + lambda * dir;
      if (entity >= 0) {
        const ObjectSpec& o = spec_.objects[entity];
        const Eigen::Vector3d c = object_center(entity, tau);
        const double dx = point.x() - c.x(), dy = point.y() - c.y();
        if (o.shape == ObjectShape::rectangle) {
          if (std::abs(dx) > 0.5 * o.size_x || std::abs(dy) > 0.5 * o.size_y) return std::nullopt;
        } else {
          const double r = 0.5 * o.size_x;
          if (dx * dx + dy * dy > r * r) return std::nullopt;
        }
      }
      best = Hit{lambda, entity, point};
      return point;
    };
    consider(2, spec_.background.distance, -1);
    if (spec_.background.ground_height) consider(1, *spec_.background.ground_height, -2);
    for (int i = 0; i < static_cast<int>(spec_.objects.size()); ++i) consider(2, object_center(i, tau).z(), i);
    // `depth` holds the ray parameter; with a unit-z camera ray it equals camera-frame z.
    return best;
  }

  double shade(const Hit& hit, int tau, int c) const {
    if (hit.entity < 0) return background_.value(hit.point, c);
    return objects_[hit.entity].value(hit.point - object_center(hit.entity, tau), c);
  }

  const SceneSpec& spec() const { return spec_; }

 private:
  const SceneSpec& spec_;
  ProceduralTexture background_;
  std::vector<ProceduralTexture> objects_;
};

}  // namespace detail

/// Ray-casts every frame at pixel centers (front-most surface wins), then derives ground-truth
/// poses, motion labels and per-source occlusion by re-projecting target hits with a 1% z-test.
inline RenderedSample render(const SceneSpec& spec) {
  const detail::SceneRenderer renderer(spec);
  const Intrinsics& k = spec.intrinsics;
  const int w = k.width, h = k.height;
  RenderedSample out;
  out.frames = spec.frames;
  std::vector<std::vector<std::optional<detail::Hit>>> hits;

  for (int fi = 0; fi < static_cast<int>(spec.frames.size()); ++fi) {
    const int tau = spec.frames[fi] - spec.target_frame;
    if (tau == 0) out.target_index = fi;
    const Pose cam = renderer.camera_pose(tau);
    ImageBuffer img(w, h, spec.channels, 0.0);
    DepthMap depth(w, h);
    std::vector<std::optional<detail::Hit>> frame_hits(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto hit = renderer.cast(cam, tau, PixelCoord{double(x), double(y)});
        frame_hits[static_cast<std::size_t>(y) * w + x] = hit;
        if (!hit) continue;
        depth.values(x, y) = hit->depth;
        depth.valid(x, y) = 1;
        for (int c = 0; c < spec.channels; ++c) img(x, y, c) = renderer.shade(*hit, tau, c);
      }
    }
    out.images.push_back(std::move(img));
    out.gt_depth.push_back(std::move(depth));
    hits.push_back(std::move(frame_hits));
  }

  out.motion_labels = LabelMap(w, h, static_cast<std::uint8_t>(MotionLabel::background));
  const auto& target_hits = hits[out.target_index];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& hit = target_hits[static_cast<std::size_t>(y) * w + x];
      if (hit && hit->entity >= 0)
        out.motion_labels(x, y) = static_cast<std::uint8_t>(spec.objects[hit->entity].label);
    }

  for (int si : out.source_indices()) {
    const int tau = spec.frames[si] - spec.target_frame;
    const Pose cam = renderer.camera_pose(tau);
    const Pose world_to_source = invert(cam);
    out.gt_poses.push_back(world_to_source);  // target camera is the world frame
    MaskMap occ(w, h, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto& hit = target_hits[static_cast<std::size_t>(y) * w + x];
        if (!hit) continue;
        Eigen::Vector3d moved = hit->point;
        if (hit->entity >= 0) moved += spec.objects[hit->entity].velocity * static_cast<double>(tau);
        const Eigen::Vector3d xs = world_to_source * moved;
        const auto ps = project_point(xs, k);
        if (!ps || !in_image_box(*ps, w, h)) continue;
        const auto seen = renderer.cast(cam, tau, *ps);
        if (seen && seen->depth < xs.z() * (1.0 - 0.01)) occ(x, y) = 1;
      }
    }
    out.occlusion.push_back(std::move(occ));
  }
  return out;
}

namespace detail {

inline TextureSpec seeded_texture(std::mt19937_64& rng, double frequency, double mean, double contrast) {
  return {rng(), frequency, mean, contrast};
}

}  // namespace detail

/// Deterministic 128×96, 3-frame scenes for each phenomenon: static, co_dir, contra_dir,
/// occlusion, mixed. The camera moves 0.1 m forward per frame.
inline SceneSpec preset(const std::string& name, std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.camera_motion = Pose::from_translation({0.0, 0.0, 0.1});
  spec.background.distance = 6.0;

  auto object = [&](ObjectShape shape, double sx, double sy, double x, double y, double depth, Eigen::Vector3d v,
                    MotionLabel label) {
    ObjectSpec o;
    o.shape = shape;
    o.size_x = sx;
    o.size_y = sy;
    o.x = x;
    o.y = y;
    o.depth = depth;
    o.velocity = v;
    o.label = label;
    o.texture = detail::seeded_texture(rng, 2.0, 0.45, 0.35);
    return o;
  };

  const Eigen::Vector3d camera_velocity = spec.camera_motion.translation;
  if (name == "static") {
    // Wall plus ground under one smooth solid texture: no depth discontinuities, so ground truth
    // reprojects almost exactly and the scene doubles as the null test.
    spec.background.ground_height = 1.5;
    spec.background.texture = detail::seeded_texture(rng, 0.25, 0.5, 0.4);
    spec.background.texture.z_scale = 0.3;
    return spec;
  }
  spec.background.texture = detail::seeded_texture(rng, 1.0, 0.5, 0.4);
  if (name == "co_dir") {
    spec.objects.push_back(object(ObjectShape::rectangle, 1.2, 0.9, 0.6, 0.4, 3.0, camera_velocity, MotionLabel::co_dir));
  } else if (name == "contra_dir") {
    // The lateral drift keeps the object off its epipolar lines, so no rigid depth explains it.
    spec.objects.push_back(
        object(ObjectShape::rectangle, 1.2, 0.9, 0.6, 0.4, 3.5, {0.1, 0.0, -0.2}, MotionLabel::contra_dir));
  } else if (name == "occlusion") {
    spec.objects.push_back(object(ObjectShape::disk, 1.0, 1.0, -0.2, 0.0, 2.0, Eigen::Vector3d::Zero(),
                                  MotionLabel::static_object));
  } else if (name == "mixed") {
    spec.objects.push_back(object(ObjectShape::rectangle, 0.9, 0.7, -1.4, 0.5, 3.0, Eigen::Vector3d::Zero(),
                                  MotionLabel::static_object));
    spec.objects.push_back(object(ObjectShape::rectangle, 0.8, 0.6, 0.2, 0.6, 3.5, camera_velocity, MotionLabel::co_dir));
    spec.objects.push_back(
        object(ObjectShape::rectangle, 0.8, 0.6, 1.3, -0.5, 4.0, {0.1, 0.0, -0.2}, MotionLabel::contra_dir));
    spec.objects.push_back(object(ObjectShape::disk, 0.6, 0.6, -0.6, -0.8, 2.5, {0.0, 0.0, 0.02}, MotionLabel::slow));
  } else {
    throw Error(Errc::unknown_preset, "unknown preset '" + name + "'");
  }
  return spec;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"static", "co_dir", "contra_dir", "occlusion", "mixed"};
  return names;
}

}  // namespace photomask

#endif  // PHOTOMASK_SCENESIM_HPP

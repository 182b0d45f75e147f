#ifndef PHOTOMASK_OPTIMIZER_HPP
#define PHOTOMASK_OPTIMIZER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "photomask/bundle.hpp"
#include "photomask/evaluation.hpp"
#include "photomask/masking.hpp"

namespace photomask {

struct OptimConfig {
  int max_iters = 500;
  /// Per-pixel step on log inverse depth; the raw gradient is multiplied by the pixel
  /// count of its scale so the step does not depend on resolution.
  double depth_step = 6.0;
  double translation_step = 0.2;
  double rotation_step = 0.0005;
  /// Per-iteration caps on the update (log inverse depth per pixel, translation norm in meters,
  /// rotation norm in radians); a capped update keeps its direction. Zero disables a cap.
  double max_depth_update = 0.1;
  double max_translation_update = 0.005;
  double max_rotation_update = 0.002;
  /// Fractions of max_iters after which both steps are divided by `decay_factor`.
  std::vector<double> decay_at{0.75, 0.9};
  double decay_factor = 5.0;
  double init_inv_depth = 0.25;
  DepthLimits limits;  // inverse depth is clamped to [1/max_depth, 1/min_depth] after each step
  std::vector<Pose> pose_init;  // empty: identity for every source
  bool optimize_depth = true;
  bool optimize_pose = true;
  bool coarse_to_fine = true;
  MaskFlags masks;
  LossConfig loss;
  OutlierConfig outlier;
  std::uint64_t seed = 42;
  double init_jitter = 0.0;  // relative noise on the initial inverse depth

  void validate() const {
    if (max_iters < 0) throw Error(Errc::invalid_argument, "max_iters must be >= 0");
    if (!(depth_step > 0.0 && translation_step > 0.0 && rotation_step > 0.0)) throw Error(Errc::invalid_argument, "step sizes must be positive");
    if (!(init_inv_depth > 0.0)) throw Error(Errc::invalid_argument, "initial inverse depth must be positive");
    if (!(limits.min_depth > 0.0 && limits.max_depth > limits.min_depth))
      throw Error(Errc::invalid_argument, "depth limits must satisfy 0 < min < max");
    if (!(max_depth_update >= 0.0 && max_translation_update >= 0.0 && max_rotation_update >= 0.0))
      throw Error(Errc::invalid_argument, "update caps must be non-negative");
    if (!(decay_factor > 0.0)) throw Error(Errc::invalid_argument, "decay factor must be positive");
    loss.validate();
    outlier.validate();
  }
};

struct ProgressLine {
  int iteration;
  int scale;
  double loss;
  double kept_fraction;
  const LossResult* result = nullptr;  // the evaluation behind this line, valid during the callback
};

struct OptimState {
  std::vector<InverseDepthMap> inv_depth;  // per scale
  std::vector<Pose> poses;                 // per source
  int iteration = 0;
  std::vector<double> loss_history;  // objective of the active stage at each iteration
  std::vector<double> kept_history;
  double initial_loss = 0.0;  // full objective at the initialization
  double final_loss = 0.0;    // full objective at the returned parameters
  bool diverged = false;

  std::vector<Vector6d> pose_tangents() const {
    std::vector<Vector6d> out;
    for (const auto& p : poses) out.push_back(p.to_tangent());
    return out;
  }

  DepthMap depth(int scale = 0) const { return depth_from_inverse(inv_depth.at(scale)); }
};

/// Bilinear 2× upsampling on pixel centers, clamped at the border.
inline InverseDepthMap upsample_2x(const InverseDepthMap& coarse, int width, int height) {
  InverseDepthMap fine(width, height, 0.0);
  const int cw = coarse.width(), ch = coarse.height();
  for (int y = 0; y < height; ++y) {
    const double v = std::clamp((y + 0.5) * 0.5 - 0.5, 0.0, double(ch - 1));
    const int y0 = std::min(static_cast<int>(v), std::max(ch - 2, 0));
    const int y1 = std::min(y0 + 1, ch - 1);
    const double ay = v - y0;
    for (int x = 0; x < width; ++x) {
      const double u = std::clamp((x + 0.5) * 0.5 - 0.5, 0.0, double(cw - 1));
      const int x0 = std::min(static_cast<int>(u), std::max(cw - 2, 0));
      const int x1 = std::min(x0 + 1, cw - 1);
      const double ax = u - x0;
      fine(x, y) = (1 - ax) * (1 - ay) * coarse(x0, y0) + ax * (1 - ay) * coarse(x1, y0) +
                   (1 - ax) * ay * coarse(x0, y1) + ax * ay * coarse(x1, y1);
    }
  }
  return fine;
}

/// Per-scale inverse depth from a full-resolution depth map, each level the 2×2 box average
/// of the one above. Every pixel must be valid.
inline std::vector<InverseDepthMap> inverse_depth_pyramid(const DepthMap& depth, int scales) {
  for (auto v : depth.valid.values())
    if (!v) throw Error(Errc::degenerate_depth, "depth pyramid needs valid depth everywhere");
  std::vector<InverseDepthMap> out{inverse_from_depth(depth)};
  for (int r = 1; r < scales; ++r) {
    const auto& f = out.back();
    InverseDepthMap c(f.width() / 2, f.height() / 2);
    for (int y = 0; y < c.height(); ++y)
      for (int x = 0; x < c.width(); ++x)
        c(x, y) = 0.25 * (f(2 * x, 2 * y) + f(2 * x + 1, 2 * y) + f(2 * x, 2 * y + 1) + f(2 * x + 1, 2 * y + 1));
    out.push_back(std::move(c));
  }
  return out;
}

/// Initial state: constant inverse depth (optionally jittered) and identity or given poses.
inline OptimState initial_state(const SampleBundle& bundle, const OptimConfig& cfg) {
  OptimState st;
  std::mt19937_64 rng(cfg.seed);
  for (int r = 0; r < cfg.loss.scales; ++r) {
    const Intrinsics k = bundle.intrinsics(r);
    InverseDepthMap m(k.width, k.height, cfg.init_inv_depth);
    if (cfg.init_jitter > 0.0)
      for (auto& v : m.values()) v *= std::exp(cfg.init_jitter * (2.0 * detail::unit_uniform(rng) - 1.0));
    st.inv_depth.push_back(std::move(m));
  }
  if (cfg.pose_init.empty()) {
    st.poses.assign(bundle.num_sources(), Pose::identity());
  } else {
    if (static_cast<int>(cfg.pose_init.size()) != bundle.num_sources())
      throw Error(Errc::invalid_argument, "pose_init needs one pose per source");
    st.poses = cfg.pose_init;
  }
  return st;
}

/// Gradient descent on per-scale log inverse depth and per-source pose tangents. Masks are
/// recomputed every iteration and held constant within the step. With coarse_to_fine the
/// iterations are split over stages r = R−1 … 0; stage r optimizes scales ≥ r and then
/// initializes scale r−1 by upsampling.
inline OptimState optimize(const SampleBundle& bundle, const OptimConfig& cfg, OptimState st,
                           const std::function<void(const ProgressLine&)>& progress = {}) {
  cfg.validate();
  const LossEvaluator evaluator(bundle, cfg.loss, cfg.outlier, cfg.masks);
  const int scales = cfg.loss.scales;
  st.initial_loss = evaluator.evaluate(st.inv_depth, st.poses).total;
  if (!std::isfinite(st.initial_loss)) {
    st.diverged = true;
    st.final_loss = st.initial_loss;
    return st;
  }

  std::vector<int> stage_first_iter;  // iteration at which stage r (indexed by r) begins
  std::vector<int> stage_scale;
  if (cfg.coarse_to_fine && scales > 1) {
    const int per_stage = cfg.max_iters / scales;
    for (int r = scales - 1; r >= 0; --r) {
      stage_first_iter.push_back((scales - 1 - r) * per_stage);
      stage_scale.push_back(r);
    }
  } else {
    stage_first_iter.push_back(0);
    stage_scale.push_back(0);
  }

  auto step_multiplier = [&](int it) {
    double m = 1.0;
    for (double frac : cfg.decay_at)
      if (it >= static_cast<int>(frac * cfg.max_iters)) m /= cfg.decay_factor;
    return m;
  };

  auto cap_norm = [](auto&& v, double cap) {
    const double n = v.norm();
    if (cap > 0.0 && n > cap) v *= cap / n;
  };

  std::size_t stage = 0;
  int first_scale = stage_scale[0];
  LossGradient grad;
  for (int it = 0; it < cfg.max_iters; ++it) {
    while (stage + 1 < stage_first_iter.size() && it >= stage_first_iter[stage + 1]) {
      ++stage;
      const int r = stage_scale[stage];
      const Intrinsics k = bundle.intrinsics(r);
      st.inv_depth[r] = upsample_2x(st.inv_depth[r + 1], k.width, k.height);
      first_scale = r;
    }

    const LossResult res = evaluator.evaluate(st.inv_depth, st.poses, &grad, nullptr, first_scale);
    if (!std::isfinite(res.total)) {
      st.diverged = true;
      break;
    }
    st.loss_history.push_back(res.total);
    st.kept_history.push_back(res.kept_fraction());
    if (progress) progress({it, first_scale, res.total, res.kept_fraction(), &res});

    // Stage r's objective leads with weight f^r; dividing it out keeps stages comparable.
    const double mult = step_multiplier(it) / std::pow(cfg.loss.f, first_scale);
    std::vector<InverseDepthMap> next_depth = st.inv_depth;
    std::vector<Pose> next_poses = st.poses;
    if (cfg.optimize_depth) {
      const double lo = 1.0 / cfg.limits.max_depth, hi = 1.0 / cfg.limits.min_depth;
      for (int r = first_scale; r < scales; ++r) {
        auto& d = next_depth[r];
        const double n = static_cast<double>(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
          // ρ = log d, ∂L/∂ρ = d·∂L/∂d.
          const double g_rho = d[i] * grad.inv_depth[r][i];
          double step = cfg.depth_step * mult * n * g_rho;
          if (cfg.max_depth_update > 0.0) step = std::clamp(step, -cfg.max_depth_update, cfg.max_depth_update);
          d[i] = std::clamp(d[i] * std::exp(-step), lo, hi);
        }
      }
    }
    if (cfg.optimize_pose) {
      for (std::size_t s = 0; s < next_poses.size(); ++s) {
        Vector6d delta;
        delta.head<3>() = -cfg.rotation_step * mult * grad.pose[s].head<3>();
        delta.tail<3>() = -cfg.translation_step * mult * grad.pose[s].tail<3>();
        cap_norm(delta.head<3>(), cfg.max_rotation_update);
        cap_norm(delta.tail<3>(), cfg.max_translation_update);
        next_poses[s] = retract(next_poses[s], delta);
      }
    }
    bool finite = true;
    for (const auto& d : next_depth)
      for (double v : d.values()) finite &= std::isfinite(v) && v > 0.0;
    for (const auto& p : next_poses) finite &= p.rotation.allFinite() && p.translation.allFinite();
    if (!finite) {
      st.diverged = true;
      break;
    }
    st.inv_depth = std::move(next_depth);
    st.poses = std::move(next_poses);
    st.iteration = it + 1;
  }
  // Finer scales that were never reached still hold their initialization.
  st.final_loss = evaluator.evaluate(st.inv_depth, st.poses).total;
  if (!std::isfinite(st.final_loss)) st.diverged = true;
  return st;
}

inline OptimState optimize(const SampleBundle& bundle, const OptimConfig& cfg,
                           const std::function<void(const ProgressLine&)>& progress = {}) {
  return optimize(bundle, cfg, initial_state(bundle, cfg), progress);
}

struct AblationVariant {
  std::string name;
  MaskFlags masks;
  double f = 0.25;
};

struct VariantReport {
  std::string name;
  MaskFlags masks;
  double f = 0.25;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
  MetricsReport overall;
  RegionReport regions;
  std::vector<Pose> poses;
};

/// Runs `optimize` once per variant with shared seed and settings, evaluating the
/// full-resolution depth against ground truth overall and per motion label.
inline std::vector<VariantReport> ablate(const SampleBundle& bundle, const DepthMap& gt_depth, const LabelMap& labels,
                                         const std::vector<AblationVariant>& variants, const OptimConfig& cfg,
                                         const DepthEvalConfig& eval_cfg = {}) {
  if (variants.empty()) throw Error(Errc::invalid_argument, "need at least one variant");
  std::vector<VariantReport> out;
  for (const auto& v : variants) {
    OptimConfig c = cfg;
    c.masks = v.masks;
    c.loss.f = v.f;
    const OptimState st = optimize(bundle, c);
    VariantReport rep;
    rep.name = v.name;
    rep.masks = v.masks;
    rep.f = v.f;
    rep.initial_loss = st.initial_loss;
    rep.final_loss = st.final_loss;
    rep.diverged = st.diverged;
    rep.poses = st.poses;
    const DepthMap pred = st.depth(0);
    MaskMap all(gt_depth.width(), gt_depth.height(), 1);
    rep.overall = depth_metrics(pred, gt_depth, all, eval_cfg);
    rep.regions = region_metrics({RegionSample{pred, gt_depth, labels}}, eval_cfg);
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace photomask

#endif  // PHOTOMASK_OPTIMIZER_HPP

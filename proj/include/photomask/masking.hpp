#ifndef PHOTOMASK_MASKING_HPP
#define PHOTOMASK_MASKING_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "photomask/bundle.hpp"
#include "photomask/geometry.hpp"
#include "photomask/photometric.hpp"
#include "photomask/random.hpp"
#include "photomask/warp.hpp"

namespace photomask {

/// Where outlier statistics come from at scales r > 0.
enum class StatsScope { per_scale, full_resolution };

struct OutlierConfig {
  double l = 1.0;
  double u = 0.5;
  double sigma_floor = 1e-12;
  StatsScope scope = StatsScope::per_scale;

  void validate() const {
    if (!(l >= 0.0 && u >= 0.0)) throw Error(Errc::invalid_argument, "outlier thresholds must be >= 0");
    if (!(sigma_floor > 0.0)) throw Error(Errc::invalid_argument, "sigma_floor must be positive");
  }
};

struct LossConfig {
  double eta = 1.0;
  double lambda = 0.001;
  double e = 0.5;
  double f = 0.25;
  int scales = 4;
  PhotometricConfig photometric;
  /// Amplitude of seeded uniform noise added to the unwarped-source error before
  /// auto-masking, so an identity pose does not tie every pixel and mask it out.
  double automask_tie_break = 1e-5;
  std::uint64_t noise_seed = 42;
  int threads = 1;

  void validate() const {
    if (!(eta > 0.0)) throw Error(Errc::invalid_argument, "eta must be positive");
    if (!(lambda >= 0.0)) throw Error(Errc::invalid_argument, "lambda must be >= 0");
    if (!(e > 0.0 && e <= 1.0)) throw Error(Errc::invalid_argument, "e must lie in (0,1]");
    if (!(f > 0.0 && f <= 1.0)) throw Error(Errc::invalid_argument, "f must lie in (0,1]");
    if (scales < 1) throw Error(Errc::invalid_argument, "scales must be >= 1");
    photometric.validate();
  }
};

/// Which masks enter the conjunction.
struct MaskFlags {
  bool outlier = true;
  bool principled = true;
  bool automask = true;
  bool min_reprojection = true;

  static MaskFlags none() { return {false, false, false, false}; }
  friend bool operator==(const MaskFlags&, const MaskFlags&) = default;
};

struct ErrorStats {
  double mu = 0.0;
  double sigma = 0.0;
  std::size_t count = 0;
};

/// Mean and population standard deviation over the valid pixels of all maps, pooled.
inline ErrorStats error_stats(std::span<const ErrorMap> errors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : errors) {
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      if (!e.valid[i]) continue;
      sum += e.values[i];
      ++n;
    }
  }
  if (n == 0) throw Error(Errc::empty_sample, "no valid photometric error pixels");
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& e : errors) {
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      if (!e.valid[i]) continue;
      const double d = e.values[i] - mu;
      ss += d * d;
    }
  }
  return {mu, std::sqrt(ss / static_cast<double>(n)), n};
}

/// True where μ − l·σ < e < μ + u·σ. Judged on values only; validity is left to the
/// principled mask. Below sigma_floor every pixel is kept.
inline MaskMap outlier_mask(const ErrorMap& err, const ErrorStats& stats, const OutlierConfig& cfg = {}) {
  MaskMap mask(err.values.width(), err.values.height(), 1);
  if (stats.sigma < cfg.sigma_floor) return mask;
  // An infinite multiplier means that side is unbounded.
  const double lo = std::isinf(cfg.l) ? -std::numeric_limits<double>::infinity() : stats.mu - cfg.l * stats.sigma;
  const double hi = std::isinf(cfg.u) ? std::numeric_limits<double>::infinity() : stats.mu + cfg.u * stats.sigma;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double e = err.values[i];
    mask[i] = (lo < e && e < hi) ? 1 : 0;
  }
  return mask;
}

/// True where the reconstruction beats the unwarped source (strict).
inline MaskMap auto_mask(const ErrorMap& err_recon, const ErrorMap& err_direct) {
  if (!err_recon.values.same_shape(err_direct.values)) throw Error(Errc::bad_shape, "error maps differ in shape");
  MaskMap mask(err_recon.values.width(), err_recon.values.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = err_recon.values[i] < err_direct.values[i] ? 1 : 0;
  return mask;
}

/// Per source, true where its error equals the per-pixel minimum over sources (ties all kept).
inline std::vector<MaskMap> min_reprojection_mask(std::span<const ErrorMap> errors) {
  if (errors.empty()) throw Error(Errc::invalid_argument, "need at least one error map");
  const auto& first = errors.front().values;
  for (const auto& e : errors)
    if (!e.values.same_shape(first)) throw Error(Errc::bad_shape, "error maps differ in shape");
  std::vector<MaskMap> masks(errors.size(), MaskMap(first.width(), first.height(), 0));
  for (std::size_t i = 0; i < first.size(); ++i) {
    double best = errors[0].values[i];
    for (const auto& e : errors) best = std::min(best, e.values[i]);
    for (std::size_t s = 0; s < errors.size(); ++s) masks[s][i] = errors[s].values[i] <= best ? 1 : 0;
  }
  return masks;
}

/// Element-wise conjunction.
inline MaskMap combine_masks(std::span<const MaskMap> masks) {
  if (masks.empty()) throw Error(Errc::invalid_argument, "need at least one mask");
  MaskMap out = masks.front();
  for (const auto& m : masks.subspan(1)) {
    if (!m.same_shape(out)) throw Error(Errc::bad_shape, "masks differ in shape");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] && m[i]) ? 1 : 0;
  }
  return out;
}

/// w_r = f^r for r = 0..scales−1.
inline std::vector<double> scale_weights(const LossConfig& cfg) {
  if (cfg.scales < 1) throw Error(Errc::invalid_argument, "scales must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(cfg.scales));
  double v = 1.0;
  for (auto& x : w) {
    x = v;
    v *= cfg.f;
  }
  return w;
}

/// All masks of one (scale, source) term. Disabled components are all-true.
struct SourceMasks {
  MaskMap outlier;
  MaskMap principled;
  MaskMap automask;
  MaskMap min_reprojection;
  MaskMap combined;
};

struct TermBreakdown {
  int scale = 0;
  int source = 0;
  double photometric = 0.0;  // masked mean of the error, before weighting
  std::size_t kept = 0;
  std::size_t in_bounds = 0;
  double kept_fraction = 0.0;  // kept / pixel count
  bool fully_masked = false;
};

struct LossResult {
  double total = 0.0;
  double photometric = 0.0;  // η Σ_r f^r Σ_s masked means
  double smoothness = 0.0;   // λ Σ_r e^r L_es^r
  std::vector<TermBreakdown> terms;           // r-major, s-minor
  std::vector<double> smoothness_per_scale;   // unweighted L_es^r
  std::vector<ErrorStats> stats_per_scale;
  std::vector<std::vector<SourceMasks>> masks;  // [scale][source]
  std::vector<std::vector<ErrorMap>> errors;    // [scale][source], valid = in-bounds
  std::vector<std::string> diagnostics;

  double kept_fraction() const {
    double sum = 0.0;
    for (const auto& t : terms) sum += t.kept_fraction;
    return terms.empty() ? 0.0 : sum / static_cast<double>(terms.size());
  }
};

struct LossGradient {
  std::vector<InverseDepthMap> inv_depth;  // ∂L/∂(inverse depth) per scale
  std::vector<Vector6d> pose;              // ∂L/∂ξ per source, left perturbation
};

/// Combined masks to hold fixed instead of recomputing them, [scale][source].
using FrozenMasks = std::vector<std::vector<MaskMap>>;

/// Evaluates the masked multi-scale objective
///   L = η Σ_r f^r Σ_s Σ_p M_s P_s / #{M_s = 1} + λ Σ_r e^r L_es^r
/// and optionally its gradient. Unwarped-source errors for auto-masking are cached.
class LossEvaluator {
 public:
  LossEvaluator(const SampleBundle& bundle, const LossConfig& cfg, const OutlierConfig& ocfg, const MaskFlags& flags)
      : bundle_(bundle), cfg_(cfg), ocfg_(ocfg), flags_(flags) {
    cfg_.validate();
    ocfg_.validate();
    if (cfg_.scales > bundle_.scales()) throw Error(Errc::invalid_argument, "bundle has fewer scales than the loss");
    if (flags_.automask) {
      std::mt19937_64 rng(cfg_.noise_seed);
      direct_.resize(cfg_.scales);
      for (int r = 0; r < cfg_.scales; ++r) {
        // One noise field per scale shared by all sources keeps the loss independent of source order.
        const Intrinsics k = bundle_.intrinsics(r);
        std::vector<double> noise(static_cast<std::size_t>(k.width) * k.height, 0.0);
        if (cfg_.automask_tie_break > 0.0)
          for (auto& v : noise) v = cfg_.automask_tie_break * detail::unit_uniform(rng);
        for (int s = 0; s < bundle_.num_sources(); ++s) {
          ErrorMap e = photometric_error(bundle_.target(r), bundle_.source(s, r), cfg_.photometric);
          for (std::size_t i = 0; i < noise.size(); ++i) e.values[i] += noise[i];
          direct_[r].push_back(std::move(e));
        }
      }
    }
  }

  const LossConfig& config() const noexcept { return cfg_; }
  const MaskFlags& flags() const noexcept { return flags_; }

  /// Scales below `first_scale` are skipped (used by coarse-to-fine optimization).
  LossResult evaluate(const std::vector<InverseDepthMap>& inv_depth, const std::vector<Pose>& poses,
                      LossGradient* gradient = nullptr, const FrozenMasks* frozen = nullptr,
                      int first_scale = 0) const {
    check_inputs(inv_depth, poses);
    const int ns = bundle_.num_sources();
    const auto weights = scale_weights(cfg_);
    LossResult out;
    out.masks.resize(cfg_.scales);
    out.errors.resize(cfg_.scales);
    out.smoothness_per_scale.assign(cfg_.scales, 0.0);
    out.stats_per_scale.resize(cfg_.scales);
    if (gradient) {
      gradient->inv_depth.clear();
      for (const auto& d : inv_depth) gradient->inv_depth.emplace_back(d.width(), d.height(), 0.0);
      gradient->pose.assign(ns, Vector6d::Zero());
    }

    std::optional<ErrorStats> full_res_stats;
    for (int r = first_scale; r < cfg_.scales; ++r) {
      const Intrinsics k = bundle_.intrinsics(r);
      const DepthMap depth = depth_from_inverse(inv_depth[r]);
      const ImageBuffer& target = bundle_.target(r);
      const int w = k.width, h = k.height;

      std::vector<WarpResult> warps(ns);
      std::vector<WarpJacobians> jacs(gradient ? ns : 0);
      std::vector<ErrorMap> recon(ns);
      for (int s = 0; s < ns; ++s) {
        if (gradient)
          warps[s] = synthesize_view(bundle_.source(s, r), depth, poses[s], k, jacs[s], cfg_.threads);
        else
          warps[s] = synthesize_view(bundle_.source(s, r), depth, poses[s], k, cfg_.threads);
        recon[s] = photometric_error(target, warps[s].image, cfg_.photometric);
        recon[s].valid = warps[s].in_bounds;
      }

      // Statistics over in-bounds pixels of every source, pooled.
      std::optional<ErrorStats> stats;
      if (ocfg_.scope == StatsScope::full_resolution && full_res_stats) {
        stats = full_res_stats;
      } else {
        try {
          stats = error_stats(recon);
        } catch (const Error&) {
          out.diagnostics.push_back("empty-sample: no in-bounds pixels at scale " + std::to_string(r));
        }
        if (r == first_scale) full_res_stats = stats;
      }
      if (stats) out.stats_per_scale[r] = *stats;

      std::vector<MaskMap> mr;
      if (flags_.min_reprojection) mr = min_reprojection_mask(recon);

      const MaskMap all_true(w, h, 1);
      for (int s = 0; s < ns; ++s) {
        SourceMasks m;
        m.outlier = (flags_.outlier && stats) ? outlier_mask(recon[s], *stats, ocfg_) : all_true;
        m.principled = flags_.principled ? warps[s].in_bounds : all_true;
        m.automask = flags_.automask ? auto_mask(recon[s], direct_[r][s]) : all_true;
        m.min_reprojection = flags_.min_reprojection ? mr[s] : all_true;
        if (frozen) {
          m.combined = frozen->at(r).at(s);
        } else {
          const MaskMap parts[] = {m.outlier, m.principled, m.automask, m.min_reprojection};
          m.combined = combine_masks(parts);
        }

        TermBreakdown term;
        term.scale = r;
        term.source = s;
        term.kept = count_true(m.combined);
        term.in_bounds = count_true(warps[s].in_bounds);
        term.kept_fraction = static_cast<double>(term.kept) / static_cast<double>(m.combined.size());
        if (term.kept == 0) {
          term.fully_masked = true;
          out.diagnostics.push_back("fully-masked: scale " + std::to_string(r) + " source " + std::to_string(s));
        } else {
          double sum = 0.0;
          for (std::size_t i = 0; i < m.combined.size(); ++i)
            if (m.combined[i]) sum += recon[s].values[i];
          term.photometric = sum / static_cast<double>(term.kept);
          out.photometric += cfg_.eta * weights[r] * term.photometric;

          if (gradient) accumulate_photometric_gradient(r, s, term.kept, weights[r], m.combined, depth, warps[s],
                                                        jacs[s], *gradient);
        }
        out.terms.push_back(term);
        out.masks[r].push_back(std::move(m));
      }
      out.errors[r] = std::move(recon);

      if (cfg_.lambda > 0.0) {
        const double es = smoothness_loss(inv_depth[r], target);
        out.smoothness_per_scale[r] = es;
        const double sw = cfg_.lambda * std::pow(cfg_.e, r);
        out.smoothness += sw * es;
        if (gradient) {
          const auto g = smoothness_backward(inv_depth[r], target);
          auto& dst = gradient->inv_depth[r];
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += sw * g[i];
        }
      }
    }
    out.total = out.photometric + out.smoothness;
    return out;
  }

 private:
  void check_inputs(const std::vector<InverseDepthMap>& inv_depth, const std::vector<Pose>& poses) const {
    if (static_cast<int>(inv_depth.size()) != cfg_.scales)
      throw Error(Errc::invalid_argument, "need one inverse depth map per scale");
    if (static_cast<int>(poses.size()) != bundle_.num_sources())
      throw Error(Errc::invalid_argument, "need one pose per source frame");
    for (int r = 0; r < cfg_.scales; ++r) {
      const Intrinsics k = bundle_.intrinsics(r);
      if (inv_depth[r].width() != k.width || inv_depth[r].height() != k.height)
        throw Error(Errc::bad_shape, "inverse depth map has the wrong size for its scale");
    }
  }

  void accumulate_photometric_gradient(int r, int s, std::size_t kept, double scale_weight, const MaskMap& mask,
                                       const DepthMap& depth, const WarpResult& warp, const WarpJacobians& jac,
                                       LossGradient& gradient) const {
    const int w = mask.width(), h = mask.height();
    Grid<double> pixel_weight(w, h, 0.0);
    const double wt = cfg_.eta * scale_weight / static_cast<double>(kept);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) pixel_weight[i] = wt;
    const ImageBuffer g_img = photometric_error_backward(bundle_.target(r), warp.image, pixel_weight, cfg_.photometric);
    auto& g_depth = gradient.inv_depth[r];
    Vector6d g_pose = Vector6d::Zero();
    const int nc = g_img.channels();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!warp.in_bounds(x, y)) continue;
        double gd = 0.0;
        for (int c = 0; c < nc; ++c) {
          const double g = g_img(x, y, c);
          if (g == 0.0) continue;
          gd += g * jac.depth(x, y, c);
          const auto jp = jac.pose(x, y, c);
          for (int j = 0; j < 6; ++j) g_pose[j] += g * jp[j];
        }
        // D = 1 / d  ⇒  ∂D/∂d = −D².
        const double dm = depth.values(x, y);
        g_depth(x, y) += -gd * dm * dm;
      }
    }
    gradient.pose[s] += g_pose;
  }

  const SampleBundle& bundle_;
  LossConfig cfg_;
  OutlierConfig ocfg_;
  MaskFlags flags_;
  std::vector<std::vector<ErrorMap>> direct_;
};

inline LossResult total_loss(const SampleBundle& bundle, const std::vector<InverseDepthMap>& inv_depth,
                             const std::vector<Pose>& poses, const LossConfig& cfg, const OutlierConfig& ocfg = {},
                             const MaskFlags& flags = {}) {
  return LossEvaluator(bundle, cfg, ocfg, flags).evaluate(inv_depth, poses);
}

}  // namespace photomask

#endif  // PHOTOMASK_MASKING_HPP

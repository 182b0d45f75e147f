#ifndef PHOTOMASK_EVALUATION_HPP
#define PHOTOMASK_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "photomask/geometry.hpp"
#include "photomask/image.hpp"
#include "photomask/scenesim.hpp"

namespace photomask {

enum class ScalingRegion { all, background_only };

/// Crop rectangle as fractions of the image size, e.g. the Eigen crop
/// {0.40810811, 0.99189189, 0.03594771, 0.96405229}.
struct CropFractions {
  double top = 0.0;
  double bottom = 1.0;
  double left = 0.0;
  double right = 1.0;
};

struct DepthEvalConfig {
  double cap = 80.0;
  double min_depth = 1e-3;
  bool median_scaling = true;
  ScalingRegion scaling_region = ScalingRegion::all;
  std::optional<CropFractions> crop;
  std::optional<double> fixed_scale;  // applied instead of the per-sample median ratio

  void validate() const {
    if (!(min_depth > 0.0 && min_depth < cap)) throw Error(Errc::invalid_argument, "need 0 < min_depth < cap");
    if (fixed_scale && !(*fixed_scale > 0.0)) throw Error(Errc::invalid_argument, "fixed scale must be positive");
  }
};

struct MetricsReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  std::size_t pixel_count = 0;
  double scale = 1.0;  // factor applied to the prediction
};

namespace detail {

/// numpy-style median (mean of the two middle elements for even counts).
inline double median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::empty_region, "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline MaskMap evaluation_selection(const DepthMap& gt, const MaskMap& mask, const DepthEvalConfig& cfg) {
  const int w = gt.width(), h = gt.height();
  int x0 = 0, x1 = w, y0 = 0, y1 = h;
  if (cfg.crop) {
    y0 = static_cast<int>(cfg.crop->top * h);
    y1 = static_cast<int>(cfg.crop->bottom * h);
    x0 = static_cast<int>(cfg.crop->left * w);
    x1 = static_cast<int>(cfg.crop->right * w);
  }
  MaskMap sel(w, h, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double g = gt.values(x, y);
      sel(x, y) = (mask(x, y) && gt.valid(x, y) && g >= cfg.min_depth && g <= cfg.cap) ? 1 : 0;
    }
  return sel;
}

}  // namespace detail

/// Standard depth metrics over `mask` ∧ gt-valid ∧ gt ∈ [min_depth, cap] ∧ crop. With
/// median scaling the prediction is multiplied by median(gt)/median(pred), taken over the
/// selection, or over `scaling_mask` (with the same gt/crop filters) when given. Predictions are then clamped
/// to [min_depth, cap].
inline MetricsReport depth_metrics(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask,
                                   const DepthEvalConfig& cfg = {}, const MaskMap* scaling_mask = nullptr) {
  cfg.validate();
  if (pred.width() != gt.width() || pred.height() != gt.height() || !mask.same_shape(gt.values))
    throw Error(Errc::bad_shape, "prediction, ground truth and mask must share a shape");
  const MaskMap sel = detail::evaluation_selection(gt, mask, cfg);
  const std::size_t n = count_true(sel);
  if (n == 0) throw Error(Errc::empty_region, "no pixels selected for evaluation");

  double scale = 1.0;
  if (cfg.fixed_scale) {
    scale = *cfg.fixed_scale;
  } else if (cfg.median_scaling) {
    const MaskMap scaling_sel = scaling_mask ? detail::evaluation_selection(gt, *scaling_mask, cfg) : sel;
    std::vector<double> g, p;
    for (std::size_t i = 0; i < scaling_sel.size(); ++i) {
      if (!scaling_sel[i]) continue;
      g.push_back(gt.values[i]);
      p.push_back(pred.values[i]);
    }
    if (g.empty()) throw Error(Errc::empty_region, "no pixels available for median scaling");
    scale = detail::median(std::move(g)) / detail::median(std::move(p));
  }

  MetricsReport m;
  m.pixel_count = n;
  m.scale = scale;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (!sel[i]) continue;
    const double g = gt.values[i];
    const double p = std::clamp(pred.values[i] * scale, cfg.min_depth, cfg.cap);
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double dl = std::log(p) - std::log(g);
    sq_log += dl * dl;
    const double thresh = std::max(p / g, g / p);
    d1 += thresh < 1.25;
    d2 += thresh < 1.25 * 1.25;
    d3 += thresh < 1.25 * 1.25 * 1.25;
  }
  const double dn = static_cast<double>(n);
  m.abs_rel = abs_rel / dn;
  m.sq_rel = sq_rel / dn;
  m.rmse = std::sqrt(sq / dn);
  m.rmse_log = std::sqrt(sq_log / dn);
  m.delta1 = static_cast<double>(d1) / dn;
  m.delta2 = static_cast<double>(d2) / dn;
  m.delta3 = static_cast<double>(d3) / dn;
  return m;
}

struct RegionSample {
  DepthMap pred;
  DepthMap gt;
  LabelMap labels;
};

struct RegionEntry {
  int label = 0;
  std::string name;
  std::size_t pixel_count = 0;
  double percent = 0.0;
  std::optional<MetricsReport> metrics;  // empty when the label never occurs
};

struct RegionReport {
  std::vector<RegionEntry> regions;
  std::vector<std::string> notes;

  const RegionEntry* find(int label) const {
    for (const auto& r : regions)
      if (r.label == label) return &r;
    return nullptr;
  }
};

using LabelLegend = std::vector<std::pair<int, std::string>>;

inline LabelLegend motion_label_legend() {
  LabelLegend legend;
  for (int i = 0; i < kNumMotionLabels; ++i) legend.emplace_back(i, motion_label_name(static_cast<MotionLabel>(i)));
  return legend;
}

/// Pixel-count-weighted average of reports. A single non-empty report is returned unchanged.
inline MetricsReport pixel_weighted_mean(const std::vector<MetricsReport>& reports) {
  std::size_t total = 0;
  for (const auto& r : reports) total += r.pixel_count;
  if (total == 0) throw Error(Errc::empty_region, "no pixels in any report");
  std::vector<const MetricsReport*> nonempty;
  for (const auto& r : reports)
    if (r.pixel_count) nonempty.push_back(&r);
  if (nonempty.size() == 1) return *nonempty.front();
  MetricsReport acc;
  for (const auto* r : nonempty) {
    const double w = static_cast<double>(r->pixel_count);
    acc.abs_rel += w * r->abs_rel;
    acc.sq_rel += w * r->sq_rel;
    acc.rmse += w * r->rmse;
    acc.rmse_log += w * r->rmse_log;
    acc.delta1 += w * r->delta1;
    acc.delta2 += w * r->delta2;
    acc.delta3 += w * r->delta3;
  }
  const double t = static_cast<double>(total);
  acc.abs_rel /= t;
  acc.sq_rel /= t;
  acc.rmse /= t;
  acc.rmse_log /= t;
  acc.delta1 /= t;
  acc.delta2 /= t;
  acc.delta3 /= t;
  acc.pixel_count = total;
  acc.scale = std::numeric_limits<double>::quiet_NaN();
  return acc;
}

/// Per-label metrics, combined across samples weighting each sample by its number of
/// evaluated pixels of that label. Median scaling uses the background label (first legend
/// entry) of each sample.
inline RegionReport region_metrics(const std::vector<RegionSample>& samples, const DepthEvalConfig& cfg = {},
                                   const LabelLegend& legend = motion_label_legend()) {
  if (samples.empty()) throw Error(Errc::invalid_argument, "no samples to evaluate");
  if (legend.empty()) throw Error(Errc::invalid_argument, "empty label legend");
  const int background = legend.front().first;

  std::vector<std::vector<MetricsReport>> parts(legend.size());
  std::vector<std::size_t> counts(legend.size(), 0);
  RegionReport report;

  for (std::size_t si = 0; si < samples.size(); ++si) {
    const auto& s = samples[si];
    if (!s.labels.same_shape(s.gt.values)) throw Error(Errc::bad_shape, "label map does not match ground truth");
    const MaskMap all(s.gt.width(), s.gt.height(), 1);
    const MaskMap sel = detail::evaluation_selection(s.gt, all, cfg);
    MaskMap bg(s.gt.width(), s.gt.height(), 0);
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = (s.labels[i] == background) ? 1 : 0;
    const MaskMap* scaling = &bg;
    std::size_t bg_count = 0;
    for (std::size_t i = 0; i < bg.size(); ++i) bg_count += (bg[i] && sel[i]);
    if (bg_count == 0) {
      scaling = nullptr;
      report.notes.push_back("sample " + std::to_string(si) + " has no background pixels; scaled on all pixels");
    }
    for (std::size_t li = 0; li < legend.size(); ++li) {
      MaskMap lm(s.gt.width(), s.gt.height(), 0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < lm.size(); ++i) {
        lm[i] = (s.labels[i] == legend[li].first) ? 1 : 0;
        n += (lm[i] && sel[i]);
      }
      if (n == 0) continue;
      const MetricsReport m = depth_metrics(s.pred, s.gt, lm, cfg, scaling);
      parts[li].push_back(m);
      counts[li] += m.pixel_count;
    }
  }

  std::size_t total = 0;
  for (auto c : counts) total += c;
  for (std::size_t li = 0; li < legend.size(); ++li) {
    RegionEntry entry;
    entry.label = legend[li].first;
    entry.name = legend[li].second;
    entry.pixel_count = counts[li];
    entry.percent = total ? 100.0 * static_cast<double>(counts[li]) / static_cast<double>(total) : 0.0;
    if (parts[li].empty()) {
      report.notes.push_back("label '" + entry.name + "' absent from every sample");
    } else {
      entry.metrics = pixel_weighted_mean(parts[li]);
    }
    report.regions.push_back(std::move(entry));
  }
  return report;
}

struct AteResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_snippet;
};

/// Absolute trajectory error over every window of `snippet` consecutive poses. Each window
/// is re-anchored at its first pose (T₀⁻¹·Tᵢ for both trajectories), the prediction's
/// translations are scaled by the least-squares factor Σ g·p / Σ p·p, and the window error
/// is the mean Euclidean translation error over its frames. Reports mean and population
/// standard deviation across windows.
inline AteResult ate_snippets(const std::vector<Pose>& pred, const std::vector<Pose>& gt, int snippet = 5) {
  if (pred.size() != gt.size()) throw Error(Errc::invalid_argument, "trajectories differ in length");
  if (snippet < 1 || static_cast<int>(gt.size()) < snippet)
    throw Error(Errc::too_short, "trajectory shorter than one snippet");
  AteResult out;
  const int windows = static_cast<int>(gt.size()) - snippet + 1;
  for (int start = 0; start < windows; ++start) {
    const Pose pred_anchor = invert(pred[start]);
    const Pose gt_anchor = invert(gt[start]);
    std::vector<Eigen::Vector3d> p, g;
    for (int i = start; i < start + snippet; ++i) {
      p.push_back(compose(pred_anchor, pred[i]).translation);
      g.push_back(compose(gt_anchor, gt[i]).translation);
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < snippet; ++i) {
      num += g[i].dot(p[i]);
      den += p[i].dot(p[i]);
    }
    const double scale = den > 0.0 ? num / den : 1.0;
    double err = 0.0;
    for (int i = 0; i < snippet; ++i) err += (scale * p[i] - g[i]).norm();
    out.per_snippet.push_back(err / snippet);
  }
  double sum = 0.0;
  for (double e : out.per_snippet) sum += e;
  out.mean = sum / static_cast<double>(windows);
  double ss = 0.0;
  for (double e : out.per_snippet) ss += (e - out.mean) * (e - out.mean);
  out.stddev = std::sqrt(ss / static_cast<double>(windows));
  return out;
}

}  // namespace photomask

#endif  // PHOTOMASK_EVALUATION_HPP

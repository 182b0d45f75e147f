#ifndef PHOTOMASK_IO_SERIALIZE_HPP
#define PHOTOMASK_IO_SERIALIZE_HPP

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "photomask/evaluation.hpp"
#include "photomask/masking.hpp"
#include "photomask/optimizer.hpp"
#include "photomask/scenesim.hpp"

namespace photomask::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------------------
// Scene specs. Unknown keys are rejected so typos surface as bad-spec instead of silently
// falling back to defaults; missing keys keep the default.

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::bad_spec, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known |= it.key() == k;
    if (!known) throw Error(Errc::bad_spec, where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline Json vec3(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d to_vec3(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::bad_spec, where + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

/// Row-major [R|t], the same 12 numbers as one trajectory line.
inline Json pose_to_json(const Pose& p) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(p.rotation(r, c));
    a.push_back(p.translation(r));
  }
  return a;
}

inline Pose pose_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 12) throw Error(Errc::bad_spec, "pose must be 12 numbers (row-major [R|t])");
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j[4 * r + c].get<double>();
    p.translation(r) = j[4 * r + 3].get<double>();
  }
  return p;
}

inline Json texture_to_json(const TextureSpec& t) {
  return {{"seed", t.seed}, {"frequency", t.frequency}, {"mean", t.mean}, {"contrast", t.contrast}, {"z_scale", t.z_scale}};
}

inline TextureSpec texture_from_json(const Json& j) {
  detail::reject_unknown(j, {"seed", "frequency", "mean", "contrast", "z_scale"}, "texture");
  TextureSpec t;
  detail::read_field(j, "seed", t.seed);
  detail::read_field(j, "frequency", t.frequency);
  detail::read_field(j, "mean", t.mean);
  detail::read_field(j, "contrast", t.contrast);
  detail::read_field(j, "z_scale", t.z_scale);
  return t;
}

inline Json scene_to_json(const SceneSpec& s) {
  Json j;
  const auto& k = s.intrinsics;
  j["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  j["channels"] = s.channels;
  Json bg = {{"distance", s.background.distance}};
  bg["ground_height"] = s.background.ground_height ? Json(*s.background.ground_height) : Json(nullptr);
  bg["texture"] = texture_to_json(s.background.texture);
  j["background"] = bg;
  Json objects = Json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"shape", o.shape == ObjectShape::disk ? "disk" : "rectangle"},
                       {"size", Json::array({o.size_x, o.size_y})},
                       {"position", Json::array({o.x, o.y})},
                       {"depth", o.depth},
                       {"velocity", detail::vec3(o.velocity)},
                       {"label", motion_label_name(o.label)},
                       {"texture", texture_to_json(o.texture)}});
  }
  j["objects"] = objects;
  j["camera_motion"] = pose_to_json(s.camera_motion);
  j["frames"] = s.frames;
  j["target_frame"] = s.target_frame;
  return j;
}

/// Parses and validates; every failure is reported as bad-spec.
inline SceneSpec scene_from_json(const Json& j) {
  SceneSpec s;
  try {
    detail::reject_unknown(j, {"intrinsics", "channels", "background", "objects", "camera_motion", "frames", "target_frame"},
                           "scene");
    if (j.contains("intrinsics")) {
      const Json& k = j.at("intrinsics");
      detail::reject_unknown(k, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
      detail::read_field(k, "fx", s.intrinsics.fx);
      detail::read_field(k, "fy", s.intrinsics.fy);
      detail::read_field(k, "cx", s.intrinsics.cx);
      detail::read_field(k, "cy", s.intrinsics.cy);
      detail::read_field(k, "width", s.intrinsics.width);
      detail::read_field(k, "height", s.intrinsics.height);
    }
    detail::read_field(j, "channels", s.channels);
    if (j.contains("background")) {
      const Json& b = j.at("background");
      detail::reject_unknown(b, {"distance", "ground_height", "texture"}, "background");
      detail::read_field(b, "distance", s.background.distance);
      if (b.contains("ground_height") && !b.at("ground_height").is_null())
        s.background.ground_height = b.at("ground_height").get<double>();
      if (b.contains("texture")) s.background.texture = texture_from_json(b.at("texture"));
    }
    if (j.contains("objects")) {
      for (const Json& oj : j.at("objects")) {
        detail::reject_unknown(oj, {"shape", "size", "position", "depth", "velocity", "label", "texture"}, "object");
        ObjectSpec o;
        const std::string shape = oj.value("shape", std::string("rectangle"));
        if (shape == "disk") o.shape = ObjectShape::disk;
        else if (shape != "rectangle") throw Error(Errc::bad_spec, "unknown object shape '" + shape + "'");
        if (oj.contains("size")) {
          const Json& sz = oj.at("size");
          if (sz.is_number()) {
            o.size_x = o.size_y = sz.get<double>();
          } else if (sz.is_array() && sz.size() == 2) {
            o.size_x = sz[0].get<double>();
            o.size_y = sz[1].get<double>();
          } else {
            throw Error(Errc::bad_spec, "object size must be a number or [width, height]");
          }
        }
        if (oj.contains("position")) {
          const Json& p = oj.at("position");
          if (!p.is_array() || p.size() != 2) throw Error(Errc::bad_spec, "object position must be [x, y]");
          o.x = p[0].get<double>();
          o.y = p[1].get<double>();
        }
        detail::read_field(oj, "depth", o.depth);
        if (oj.contains("velocity")) o.velocity = detail::to_vec3(oj.at("velocity"), "object velocity");
        if (oj.contains("label")) {
          const std::string name = oj.at("label").get<std::string>();
          const auto label = motion_label_from_name(name);
          if (!label) throw Error(Errc::bad_spec, "unknown motion label '" + name + "'");
          o.label = *label;
        }
        if (oj.contains("texture")) o.texture = texture_from_json(oj.at("texture"));
        s.objects.push_back(o);
      }
    }
    if (j.contains("camera_motion")) s.camera_motion = pose_from_json(j.at("camera_motion"));
    detail::read_field(j, "frames", s.frames);
    detail::read_field(j, "target_frame", s.target_frame);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_spec, e.what());
  }
  s.validate();
  return s;
}

inline SceneSpec parse_scene(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_spec, e.what());
  }
  return scene_from_json(j);
}

// ---------------------------------------------------------------------------------------
// Label legends: {"labels": [{"value": 0, "name": "background"}, ...]}

inline Json legend_to_json(const LabelLegend& legend) {
  Json a = Json::array();
  for (const auto& [v, name] : legend) a.push_back({{"value", v}, {"name", name}});
  return {{"labels", a}};
}

inline LabelLegend legend_from_json(const Json& j) {
  LabelLegend legend;
  try {
    for (const Json& e : j.at("labels")) {
      const int v = e.at("value").get<int>();
      if (v < 0 || v > 255) throw Error(Errc::io, "legend value out of 0..255");
      for (const auto& [existing, _] : legend)
        if (existing == v) throw Error(Errc::io, "legend value " + std::to_string(v) + " listed twice");
      legend.emplace_back(v, e.at("name").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io, std::string("malformed legend: ") + e.what());
  }
  return legend;
}

// ---------------------------------------------------------------------------------------
// Configs, recorded in manifests.

inline Json config_to_json(const OptimConfig& c) {
  const auto& l = c.loss;
  const auto& ph = l.photometric;
  return {
      {"max_iters", c.max_iters},
      {"depth_step", c.depth_step},
      {"translation_step", c.translation_step},
      {"rotation_step", c.rotation_step},
      {"max_depth_update", c.max_depth_update},
      {"max_translation_update", c.max_translation_update},
      {"max_rotation_update", c.max_rotation_update},
      {"decay_factor", c.decay_factor},
      {"init_inv_depth", c.init_inv_depth},
      {"min_depth", c.limits.min_depth},
      {"max_depth", c.limits.max_depth},
      {"optimize_depth", c.optimize_depth},
      {"optimize_pose", c.optimize_pose},
      {"coarse_to_fine", c.coarse_to_fine},
      {"init_jitter", c.init_jitter},
      {"masks",
       {{"outlier", c.masks.outlier},
        {"principled", c.masks.principled},
        {"automask", c.masks.automask},
        {"min_reprojection", c.masks.min_reprojection}}},
      {"loss",
       {{"eta", l.eta},
        {"lambda", l.lambda},
        {"e", l.e},
        {"f", l.f},
        {"scales", l.scales},
        {"alpha", ph.alpha},
        {"ssim_window", ph.ssim_window},
        {"ssim_weighting", ph.weighting == SsimWindow::gaussian ? "gaussian" : "uniform"},
        {"automask_tie_break", l.automask_tie_break},
        {"noise_seed", l.noise_seed},
        {"threads", l.threads}}},
      {"outlier",
       {{"l", c.outlier.l},
        {"u", c.outlier.u},
        {"scope", c.outlier.scope == StatsScope::full_resolution ? "full_resolution" : "per_scale"}}},
  };
}

inline Json config_to_json(const DepthEvalConfig& c) {
  Json j = {{"cap", c.cap},
            {"min_depth", c.min_depth},
            {"median_scaling", c.median_scaling},
            {"scaling_region", c.scaling_region == ScalingRegion::background_only ? "background_only" : "all"}};
  j["crop"] = c.crop ? Json::array({c.crop->top, c.crop->bottom, c.crop->left, c.crop->right}) : Json(nullptr);
  j["fixed_scale"] = c.fixed_scale ? Json(*c.fixed_scale) : Json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------------------
// Reports.

inline Json metrics_to_json(const MetricsReport& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse},     {"rmse_log", m.rmse_log},
          {"delta1", m.delta1},   {"delta2", m.delta2}, {"delta3", m.delta3}, {"pixel_count", m.pixel_count},
          {"scale", std::isnan(m.scale) ? Json(nullptr) : Json(m.scale)}};  // NaN: reports pooled over samples
}

inline MetricsReport metrics_from_json(const Json& j) {
  MetricsReport m;
  m.abs_rel = j.at("abs_rel").get<double>();
  m.sq_rel = j.at("sq_rel").get<double>();
  m.rmse = j.at("rmse").get<double>();
  m.rmse_log = j.at("rmse_log").get<double>();
  m.delta1 = j.at("delta1").get<double>();
  m.delta2 = j.at("delta2").get<double>();
  m.delta3 = j.at("delta3").get<double>();
  m.pixel_count = j.at("pixel_count").get<std::size_t>();
  m.scale = j.contains("scale") && !j.at("scale").is_null() ? j.at("scale").get<double>()
                                                              : std::numeric_limits<double>::quiet_NaN();
  return m;
}

inline Json regions_to_json(const RegionReport& r) {
  Json a = Json::array();
  for (const auto& e : r.regions) {
    a.push_back({{"label", e.label},
                 {"name", e.name},
                 {"pixel_count", e.pixel_count},
                 {"percent", e.percent},
                 {"metrics", e.metrics ? metrics_to_json(*e.metrics) : Json(nullptr)}});
  }
  return {{"regions", a}, {"notes", r.notes}};
}

inline Json loss_to_json(const LossResult& l) {
  Json terms = Json::array();
  for (const auto& t : l.terms) {
    terms.push_back({{"scale", t.scale},
                     {"source", t.source},
                     {"photometric", t.photometric},
                     {"kept_fraction", t.kept_fraction},
                     {"smoothness", l.smoothness_per_scale.at(t.scale)},
                     {"fully_masked", t.fully_masked}});
  }
  return {{"total", l.total},
          {"photometric", l.photometric},
          {"smoothness", l.smoothness},
          {"kept_fraction", l.kept_fraction()},
          {"terms", terms},
          {"diagnostics", l.diagnostics}};
}

inline Json variant_to_json(const VariantReport& v) {
  Json poses = Json::array();
  for (const auto& p : v.poses) poses.push_back(pose_to_json(p));
  return {{"name", v.name},
          {"masks",
           {{"outlier", v.masks.outlier},
            {"principled", v.masks.principled},
            {"automask", v.masks.automask},
            {"min_reprojection", v.masks.min_reprojection}}},
          {"f", v.f},
          {"initial_loss", v.initial_loss},
          {"final_loss", v.final_loss},
          {"diverged", v.diverged},
          {"overall", metrics_to_json(v.overall)},
          {"regions", regions_to_json(v.regions)},
          {"poses", poses}};
}

// ---------------------------------------------------------------------------------------
// CSV flattenings. Numbers use 17 significant digits.

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* metrics_csv_columns() { return "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,pixel_count,scale"; }

inline std::string metrics_csv_fields(const MetricsReport& m) {
  std::string s;
  for (double v : {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3}) s += csv_number(v) + ",";
  return s + std::to_string(m.pixel_count) + "," + (std::isnan(m.scale) ? std::string() : csv_number(m.scale));
}

/// One row for the whole image ("all") followed by one row per region; absent regions
/// leave the metric columns empty.
inline std::string report_csv(const std::optional<MetricsReport>& overall, const RegionReport* regions) {
  std::string out = std::string("region,label,percent,") + metrics_csv_columns() + "\n";
  if (overall) out += "all,," + csv_number(100.0) + "," + metrics_csv_fields(*overall) + "\n";
  if (regions) {
    for (const auto& e : regions->regions) {
      out += e.name + "," + std::to_string(e.label) + "," + csv_number(e.percent) + ",";
      out += e.metrics ? metrics_csv_fields(*e.metrics) : std::string(",,,,,,,") + std::to_string(e.pixel_count) + ",";
      out += "\n";
    }
  }
  return out;
}

inline std::string ablation_csv(const std::vector<VariantReport>& variants) {
  std::string out = std::string("variant,region,label,percent,initial_loss,final_loss,") + metrics_csv_columns() + "\n";
  for (const auto& v : variants) {
    const std::string head = v.name + ",";
    const std::string losses = csv_number(v.initial_loss) + "," + csv_number(v.final_loss) + ",";
    out += head + "all,," + csv_number(100.0) + "," + losses + metrics_csv_fields(v.overall) + "\n";
    for (const auto& e : v.regions.regions) {
      out += head + e.name + "," + std::to_string(e.label) + "," + csv_number(e.percent) + "," + losses;
      out += e.metrics ? metrics_csv_fields(*e.metrics) : std::string(",,,,,,,") + std::to_string(e.pixel_count) + ",";
      out += "\n";
    }
  }
  return out;
}

inline std::string loss_csv(const LossResult& l) {
  std::string out = "scale,source,photometric,kept_fraction,smoothness,fully_masked\n";
  for (const auto& t : l.terms)
    out += std::to_string(t.scale) + "," + std::to_string(t.source) + "," + csv_number(t.photometric) + "," +
           csv_number(t.kept_fraction) + "," + csv_number(l.smoothness_per_scale.at(t.scale)) + "," +
           (t.fully_masked ? "1" : "0") + "\n";
  return out;
}

}  // namespace photomask::io

#endif  // PHOTOMASK_IO_SERIALIZE_HPP

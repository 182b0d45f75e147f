#ifndef PHOTOMASK_CLI_HPP
#define PHOTOMASK_CLI_HPP

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "photomask/evaluation.hpp"
#include "photomask/io/files.hpp"
#include "photomask/io/pfm.hpp"
#include "photomask/io/png.hpp"
#include "photomask/io/serialize.hpp"
#include "photomask/io/trajectory.hpp"
#include "photomask/optimizer.hpp"
#include "photomask/scenesim.hpp"

#ifndef PHOTOMASK_VERSION
#define PHOTOMASK_VERSION "0.1.0"
#endif

namespace photomask::cli {

namespace fs = std::filesystem;
using io::Json;

enum ExitCode : int { kOk = 0, kInputError = 2, kNumericalFailure = 3 };

/// Numerical failures exit 3; everything else the library throws is an input problem.
inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::diverged:
    case Errc::degenerate_depth:
    case Errc::behind_camera:
    case Errc::fully_masked: return kNumericalFailure;
    default: return kInputError;
  }
}

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

// ---------------------------------------------------------------------------------------
// Shared option blocks

struct CommonOptions {
  std::string out;
  std::uint64_t seed = 42;
  int threads = 1;
  std::string format = "json";
};

struct SceneOptions {
  std::string scene_dir;
  std::string preset;
  std::string spec;
};

struct LossOptions {
  double f = 0.25, u = 0.5, l = 1.0, eta = 1.0, lambda = 0.001, e = 0.5;
  int scales = 4;
  bool no_outlier = false, no_principled = false, no_automask = false, no_min_reprojection = false;
  bool full_resolution_stats = false;
};

inline void add_common(CLI::App* app, CommonOptions& o, bool needs_out = true) {
  auto* out = app->add_option("--out", o.out, "Output directory");
  if (needs_out) out->required();
  app->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  app->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--format", o.format, "Report format printed to stdout")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
}

inline void add_scene(CLI::App* app, SceneOptions& o) {
  auto* grp = app->add_option_group("scene", "Input scene");
  grp->add_option("--scene", o.scene_dir, "Directory written by `simulate`");
  grp->add_option("--preset", o.preset, "Built-in scene name");
  grp->add_option("--spec", o.spec, "Scene spec JSON file");
  grp->require_option(1);
}

inline void add_loss(CLI::App* app, LossOptions& o) {
  app->add_option("--f", o.f, "Scale weight factor")->capture_default_str();
  app->add_option("--u", o.u, "Outlier mask upper threshold (multiples of sigma)")->capture_default_str();
  app->add_option("--l", o.l, "Outlier mask lower threshold (multiples of sigma)")->capture_default_str();
  app->add_option("--eta", o.eta, "Photometric term weight")->capture_default_str();
  app->add_option("--lambda", o.lambda, "Smoothness weight")->capture_default_str();
  app->add_option("--e", o.e, "Smoothness scale factor")->capture_default_str();
  app->add_option("--scales", o.scales, "Pyramid levels")->capture_default_str()->check(CLI::Range(1, 8));
  app->add_flag("--no-outlier-mask", o.no_outlier, "Disable the outlier mask");
  app->add_flag("--no-principled-mask", o.no_principled, "Disable the principled (in-bounds) mask");
  app->add_flag("--no-auto-mask", o.no_automask, "Disable the auto-mask");
  app->add_flag("--no-min-reprojection", o.no_min_reprojection, "Disable the min-reprojection mask");
  app->add_flag("--full-resolution-stats", o.full_resolution_stats,
                "Outlier statistics from full-resolution errors instead of per scale");
}

inline int resolve_threads(int t) {
  if (t > 0) return t;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

inline void apply_loss(const LossOptions& o, const CommonOptions& c, OptimConfig& cfg) {
  cfg.seed = c.seed;
  cfg.loss.f = o.f;
  cfg.loss.eta = o.eta;
  cfg.loss.lambda = o.lambda;
  cfg.loss.e = o.e;
  cfg.loss.scales = o.scales;
  cfg.loss.noise_seed = c.seed;
  cfg.loss.threads = resolve_threads(c.threads);
  cfg.outlier.u = o.u;
  cfg.outlier.l = o.l;
  cfg.outlier.scope = o.full_resolution_stats ? StatsScope::full_resolution : StatsScope::per_scale;
  cfg.masks.outlier = !o.no_outlier;
  cfg.masks.principled = !o.no_principled;
  cfg.masks.automask = !o.no_automask;
  cfg.masks.min_reprojection = !o.no_min_reprojection;
}

// ---------------------------------------------------------------------------------------
// Scene loading

/// Frames plus whatever ground truth is available.
struct SceneInput {
  SceneSpec spec;
  std::vector<ImageBuffer> images;  // spec frame order
  int target_index = 0;
  std::optional<DepthMap> gt_depth;  // target frame
  std::optional<LabelMap> labels;
  std::optional<std::vector<Pose>> gt_poses;

  ImageBuffer target() const { return images.at(target_index); }
  std::vector<ImageBuffer> sources() const {
    std::vector<ImageBuffer> out;
    for (int i = 0; i < static_cast<int>(images.size()); ++i)
      if (i != target_index) out.push_back(images[i]);
    return out;
  }
};

inline std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02d.%s", stem, index, ext);
  return buf;
}

inline int target_index_of(const SceneSpec& spec) {
  for (int i = 0; i < static_cast<int>(spec.frames.size()); ++i)
    if (spec.frames[i] == spec.target_frame) return i;
  throw Error(Errc::bad_spec, "target frame missing from frames");
}

inline SceneSpec load_spec(const SceneOptions& o, std::uint64_t seed) {
  if (!o.preset.empty()) return preset(o.preset, seed);
  return io::parse_scene(io::read_text(o.spec));
}

inline SceneInput load_scene(const SceneOptions& o, std::uint64_t seed) {
  SceneInput in;
  if (o.scene_dir.empty()) {
    in.spec = load_spec(o, seed);
    RenderedSample s = render(in.spec);
    in.images = std::move(s.images);
    in.target_index = s.target_index;
    in.gt_depth = s.gt_depth.at(s.target_index);
    in.labels = std::move(s.motion_labels);
    in.gt_poses = std::move(s.gt_poses);
    return in;
  }
  const fs::path dir(o.scene_dir);
  in.spec = io::parse_scene(io::read_text((dir / "scene.json").string()));
  in.target_index = target_index_of(in.spec);
  for (int i = 0; i < static_cast<int>(in.spec.frames.size()); ++i) {
    ImageBuffer img = io::read_image_png((dir / frame_name("image", i, "png")).string());
    if (img.width() != in.spec.intrinsics.width || img.height() != in.spec.intrinsics.height)
      throw Error(Errc::bad_shape, frame_name("image", i, "png") + " does not match the scene intrinsics");
    in.images.push_back(std::move(img));
  }
  const fs::path depth = dir / frame_name("depth", in.target_index, "pfm");
  if (fs::exists(depth)) in.gt_depth = io::read_pfm(depth.string());
  if (fs::exists(dir / "labels.png")) in.labels = io::read_gray_png((dir / "labels.png").string());
  if (fs::exists(dir / "poses.txt")) in.gt_poses = io::read_trajectory((dir / "poses.txt").string());
  return in;
}

inline DepthMap read_depth_any(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".pfm") return io::read_pfm(path);
  if (ext == ".png") return io::read_depth_png(path);
  throw Error(Errc::io, "'" + path + "': depth files must be .pfm or .png");
}

// ---------------------------------------------------------------------------------------
// Manifests. Output paths are relative to the output directory.

class RunRecorder {
 public:
  RunRecorder(std::string command, std::vector<std::string> argv, std::string out_dir)
      : command_(std::move(command)), argv_(std::move(argv)), out_dir_(std::move(out_dir)),
        start_(std::chrono::steady_clock::now()) {
    io::ensure_directory(out_dir_);
  }

  std::string path(const std::string& rel) const { return (fs::path(out_dir_) / rel).string(); }

  /// Creates parent directories and records `rel` as an output.
  std::string output(const std::string& rel) {
    const fs::path p = fs::path(out_dir_) / rel;
    if (p.has_parent_path()) io::ensure_directory(p.parent_path().string());
    outputs_.push_back(rel);
    return p.string();
  }

  void write_text(const std::string& rel, const std::string& content) { io::write_text(output(rel), content); }
  void write_json(const std::string& rel, const Json& j) { write_text(rel, j.dump(2) + "\n"); }

  Json& config() { return config_; }

  void finish(std::uint64_t seed, int exit_code) {
    Json outs = Json::array();
    for (const auto& rel : outputs_) outs.push_back({{"path", rel}, {"digest", io::file_digest(path(rel))}});
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json m = {{"command", command_},   {"argv", argv_},     {"config", config_}, {"seed", seed},
              {"version", PHOTOMASK_VERSION}, {"exit_code", exit_code}, {"outputs", outs}, {"wall_time_s", wall}};
    io::write_text_atomic(path("manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string out_dir_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  Json config_ = Json::object();
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void print_report(std::ostream& out, const std::string& format, const Json& j, const std::string& csv) {
  if (format == "csv") out << csv;
  else out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  CommonOptions common;
  std::string preset;
  std::string spec;
  int bit_depth = 8;
};

inline int run_simulate(const SimulateOptions& o, const std::vector<std::string>& argv, Streams s) {
  SceneSpec spec = !o.preset.empty() ? preset(o.preset, o.common.seed) : io::parse_scene(io::read_text(o.spec));
  if (spec.channels != 1 && spec.channels != 3) throw Error(Errc::bad_spec, "PNG export needs 1 or 3 channels");
  const RenderedSample sample = render(spec);
  RunRecorder rec("simulate", argv, o.common.out);
  rec.config() = {{"scene", io::scene_to_json(spec)}, {"bit_depth", o.bit_depth}};
  rec.write_json("scene.json", io::scene_to_json(spec));
  for (int i = 0; i < static_cast<int>(sample.images.size()); ++i) {
    io::write_image_png(rec.output(frame_name("image", i, "png")), sample.images[i], o.bit_depth);
    io::write_pfm(rec.output(frame_name("depth", i, "pfm")), sample.gt_depth[i]);
    io::write_depth_png(rec.output(frame_name("depth", i, "png")), sample.gt_depth[i]);
  }
  io::write_gray_png(rec.output("labels.png"), sample.motion_labels);
  rec.write_json("labels.json", io::legend_to_json(motion_label_legend()));
  const auto src = sample.source_indices();
  for (std::size_t k = 0; k < src.size(); ++k)
    io::write_mask_png(rec.output(frame_name("occlusion", src[k], "png")), sample.occlusion[k]);
  rec.write_text("poses.txt", io::format_trajectory(sample.gt_poses));
  rec.finish(o.common.seed, kOk);
  s.out << "simulate: " << sample.images.size() << " frames written to " << o.common.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------------------
// optimize

struct OptimizeOptions {
  CommonOptions common;
  SceneOptions scene;
  LossOptions loss;
  int iters = 500;
  bool fix_pose = false;
  bool fix_depth = false;
  bool no_coarse_to_fine = false;
  double init_depth = 4.0;
  int checkpoint_every = 100;
  int progress_every = 50;
};

struct PoseError {
  double translation = 0.0;  // ‖t − t_gt‖ in meters
  double relative = 0.0;     // divided by ‖t_gt‖
  double rotation_deg = 0.0;
};

inline PoseError pose_error(const Pose& est, const Pose& gt) {
  PoseError e;
  e.translation = (est.translation - gt.translation).norm();
  const double n = gt.translation.norm();
  e.relative = n > 0.0 ? e.translation / n : 0.0;
  e.rotation_deg = so3_log(est.rotation * gt.rotation.transpose()).norm() * 180.0 / 3.14159265358979323846;
  return e;
}

inline int run_optimize(const OptimizeOptions& o, const std::vector<std::string>& argv, Streams s) {
  const SceneInput in = load_scene(o.scene, o.common.seed);
  OptimConfig cfg;
  apply_loss(o.loss, o.common, cfg);
  cfg.max_iters = o.iters;
  cfg.coarse_to_fine = !o.no_coarse_to_fine;
  if (!(o.init_depth > 0.0)) throw Error(Errc::invalid_argument, "--init-depth must be positive");
  cfg.init_inv_depth = 1.0 / o.init_depth;
  if (o.fix_pose && o.fix_depth) throw Error(Errc::invalid_argument, "--fix-pose and --fix-depth leave nothing to optimize");
  if (o.fix_pose) {
    if (!in.gt_poses) throw Error(Errc::io, "--fix-pose needs ground-truth poses");
    cfg.pose_init = *in.gt_poses;
    cfg.optimize_pose = false;
  }
  const SampleBundle bundle(in.target(), in.sources(), in.spec.intrinsics, cfg.loss.scales);
  OptimState init = initial_state(bundle, cfg);
  if (o.fix_depth) {
    if (!in.gt_depth) throw Error(Errc::io, "--fix-depth needs ground-truth depth");
    init.inv_depth = inverse_depth_pyramid(*in.gt_depth, cfg.loss.scales);
    cfg.optimize_depth = false;
    cfg.coarse_to_fine = false;
  }

  RunRecorder rec("optimize", argv, o.common.out);
  rec.config() = {{"optimizer", io::config_to_json(cfg)},
                  {"scene", io::scene_to_json(in.spec)},
                  {"fix_pose", o.fix_pose},
                  {"fix_depth", o.fix_depth},
                  {"checkpoint_every", o.checkpoint_every}};

  std::string loss_rows = "iteration,scale,loss,kept_fraction\n";
  auto progress = [&](const ProgressLine& p) {
    loss_rows += std::to_string(p.iteration) + "," + std::to_string(p.scale) + "," + io::csv_number(p.loss) + "," +
                 io::csv_number(p.kept_fraction) + "\n";
    if (o.progress_every > 0 && p.iteration % o.progress_every == 0)
      s.out << "iter " << p.iteration << " scale " << p.scale << " loss " << fmt(p.loss) << " kept " << fmt(p.kept_fraction)
            << "\n";
    if (o.checkpoint_every > 0 && p.iteration % o.checkpoint_every == 0 && p.result) {
      const auto& masks = p.result->masks.at(p.scale);
      for (std::size_t k = 0; k < masks.size(); ++k) {
        char rel[64];
        std::snprintf(rel, sizeof rel, "masks/iter_%05d_s%zu.png", p.iteration, k);
        io::write_mask_png(rec.output(rel), masks[k].combined);
      }
    }
  };
  const OptimState st = optimize(bundle, cfg, std::move(init), progress);
  rec.write_text("loss.csv", loss_rows);

  const DepthMap depth = st.depth(0);
  io::write_pfm(rec.output("depth.pfm"), depth);
  io::write_depth_png(rec.output("depth.png"), depth);
  rec.write_text("poses.txt", io::format_trajectory(st.poses));

  Json report = {{"iterations", st.iteration},
                 {"initial_loss", st.initial_loss},
                 {"final_loss", st.final_loss},
                 {"diverged", st.diverged}};
  if (!st.diverged) {
    const LossEvaluator ev(bundle, cfg.loss, cfg.outlier, cfg.masks);
    const LossResult final_eval = ev.evaluate(st.inv_depth, st.poses);
    rec.write_json("loss_breakdown.json", io::loss_to_json(final_eval));
    for (std::size_t k = 0; k < final_eval.masks[0].size(); ++k)
      io::write_mask_png(rec.output("masks/final_s" + std::to_string(k) + ".png"), final_eval.masks[0][k].combined);
  }

  std::optional<MetricsReport> overall;
  std::optional<RegionReport> regions;
  if (in.gt_depth && !st.diverged) {
    const DepthEvalConfig ecfg;
    overall = depth_metrics(depth, *in.gt_depth, MaskMap(depth.width(), depth.height(), 1), ecfg);
    report["metrics"] = io::metrics_to_json(*overall);
    if (in.labels) {
      regions = region_metrics({RegionSample{depth, *in.gt_depth, *in.labels}}, ecfg);
      report["regions"] = io::regions_to_json(*regions);
    }
  }
  if (in.gt_poses) {
    Json pe = Json::array();
    for (std::size_t k = 0; k < st.poses.size() && k < in.gt_poses->size(); ++k) {
      const PoseError e = pose_error(st.poses[k], (*in.gt_poses)[k]);
      pe.push_back({{"source", k},
                    {"translation_error", e.translation},
                    {"relative_translation_error", e.relative},
                    {"rotation_error_deg", e.rotation_deg}});
    }
    report["pose_errors"] = pe;
  }
  const std::string csv = io::report_csv(overall, regions ? &*regions : nullptr);
  rec.write_json("metrics.json", report);
  rec.write_text("metrics.csv", csv);

  const int code = st.diverged ? kNumericalFailure : kOk;
  rec.finish(o.common.seed, code);
  if (st.diverged) {
    s.err << "optimize: diverged after " << st.iteration << " iterations; partial outputs kept in " << o.common.out
          << "\n";
    return code;
  }
  print_report(s.out, o.common.format, report, csv);
  return code;
}

// ---------------------------------------------------------------------------------------
// ablate

struct AblateOptions {
  CommonOptions common;
  SceneOptions scene;
  LossOptions loss;
  int iters = 500;
  bool fix_pose = false;
  std::vector<std::string> variants{"full", "no_outlier", "no_automask", "no_min_reprojection"};
};

inline AblationVariant named_variant(const std::string& name, double f) {
  AblationVariant v{name, {}, f};
  if (name == "full") return v;
  if (name == "no_outlier") v.masks.outlier = false;
  else if (name == "no_principled") v.masks.principled = false;
  else if (name == "no_automask") v.masks.automask = false;
  else if (name == "no_min_reprojection") v.masks.min_reprojection = false;
  else if (name == "no_masks") v.masks = {false, false, false, false};
  else if (name == "equal_scales") v.f = 1.0;
  else throw Error(Errc::invalid_argument, "unknown variant '" + name + "'");
  return v;
}

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"full",         "no_outlier", "no_principled", "no_automask",
                                              "no_min_reprojection", "no_masks", "equal_scales"};
  return names;
}

inline int run_ablate(const AblateOptions& o, const std::vector<std::string>& argv, Streams s) {
  const SceneInput in = load_scene(o.scene, o.common.seed);
  if (!in.gt_depth || !in.labels) throw Error(Errc::io, "ablation needs ground-truth depth and labels");
  OptimConfig cfg;
  apply_loss(o.loss, o.common, cfg);
  cfg.max_iters = o.iters;
  if (o.fix_pose) {
    if (!in.gt_poses) throw Error(Errc::io, "--fix-pose needs ground-truth poses");
    cfg.pose_init = *in.gt_poses;
    cfg.optimize_pose = false;
  }
  std::vector<AblationVariant> variants;
  for (const auto& n : o.variants) variants.push_back(named_variant(n, o.loss.f));
  const SampleBundle bundle(in.target(), in.sources(), in.spec.intrinsics, cfg.loss.scales);

  RunRecorder rec("ablate", argv, o.common.out);
  rec.config() = {{"optimizer", io::config_to_json(cfg)}, {"scene", io::scene_to_json(in.spec)}, {"variants", o.variants},
                  {"fix_pose", o.fix_pose}};
  const auto reports = ablate(bundle, *in.gt_depth, *in.labels, variants, cfg);
  Json j = Json::array();
  bool diverged = false;
  for (const auto& r : reports) {
    j.push_back(io::variant_to_json(r));
    diverged |= r.diverged;
  }
  const Json report = {{"variants", j}};
  const std::string csv = io::ablation_csv(reports);
  rec.write_json("ablation.json", report);
  rec.write_text("ablation.csv", csv);
  const int code = diverged ? kNumericalFailure : kOk;
  rec.finish(o.common.seed, code);
  if (diverged) s.err << "ablate: at least one variant diverged\n";
  print_report(s.out, o.common.format, report, csv);
  return code;
}

// ---------------------------------------------------------------------------------------
// masks

struct MasksOptions {
  CommonOptions common;
  SceneOptions scene;
  LossOptions loss;
  std::string depth;
  std::string poses;
};

inline double max_error(const ErrorMap& e) {
  double m = 0.0;
  for (std::size_t i = 0; i < e.values.size(); ++i)
    if (e.valid[i]) m = std::max(m, e.values[i]);
  return m;
}

inline int run_masks(const MasksOptions& o, const std::vector<std::string>& argv, Streams s) {
  const SceneInput in = load_scene(o.scene, o.common.seed);
  OptimConfig cfg;
  apply_loss(o.loss, o.common, cfg);
  DepthMap depth;
  if (!o.depth.empty()) depth = read_depth_any(o.depth);
  else if (in.gt_depth) depth = *in.gt_depth;
  else throw Error(Errc::io, "no depth given and the scene has no ground truth");
  if (depth.width() != in.spec.intrinsics.width || depth.height() != in.spec.intrinsics.height)
    throw Error(Errc::bad_shape, "depth does not match the scene size");
  std::vector<Pose> poses;
  if (!o.poses.empty()) poses = io::read_trajectory(o.poses);
  else if (in.gt_poses) poses = *in.gt_poses;
  else throw Error(Errc::io, "no poses given and the scene has no ground truth");

  const SampleBundle bundle(in.target(), in.sources(), in.spec.intrinsics, cfg.loss.scales);
  if (static_cast<int>(poses.size()) != bundle.num_sources())
    throw Error(Errc::io, "expected " + std::to_string(bundle.num_sources()) + " poses");
  const LossEvaluator ev(bundle, cfg.loss, cfg.outlier, cfg.masks);
  const LossResult res = ev.evaluate(inverse_depth_pyramid(depth, cfg.loss.scales), poses);

  RunRecorder rec("masks", argv, o.common.out);
  rec.config() = {{"optimizer", io::config_to_json(cfg)}, {"scene", io::scene_to_json(in.spec)}, {"depth", o.depth},
                  {"poses", o.poses}};
  Json maps = Json::array();
  for (int r = 0; r < cfg.loss.scales; ++r) {
    for (int k = 0; k < bundle.num_sources(); ++k) {
      const SourceMasks& m = res.masks[r][k];
      const std::string tag = "_r" + std::to_string(r) + "_s" + std::to_string(k) + ".png";
      io::write_mask_png(rec.output("M_ol" + tag), m.outlier);
      io::write_mask_png(rec.output("M_p" + tag), m.principled);
      io::write_mask_png(rec.output("M_a" + tag), m.automask);
      io::write_mask_png(rec.output("M_mr" + tag), m.min_reprojection);
      io::write_mask_png(rec.output("M" + tag), m.combined);
      const ErrorMap& err = res.errors[r][k];
      const double scale = max_error(err);
      Grid<double> shown = err.values;
      for (std::size_t i = 0; i < shown.size(); ++i)
        if (!err.valid[i]) shown[i] = 0.0;
      io::write_heatmap_png(rec.output("error" + tag), shown, scale);
      const double n = static_cast<double>(m.combined.size());
      Json entry = {{"scale", r},
                    {"source", k},
                    {"heatmap_max", scale},
                    {"kept", {{"outlier", count_true(m.outlier) / n},
                              {"principled", count_true(m.principled) / n},
                              {"automask", count_true(m.automask) / n},
                              {"min_reprojection", count_true(m.min_reprojection) / n},
                              {"combined", count_true(m.combined) / n}}}};
      if (r == 0 && in.labels) {
        // Share of each label's pixels the outlier mask removes.
        Json excluded = Json::object();
        for (const auto& [value, name] : motion_label_legend()) {
          std::size_t total = 0, out = 0;
          for (std::size_t i = 0; i < m.outlier.size(); ++i) {
            if ((*in.labels)[i] != value) continue;
            ++total;
            out += !m.outlier[i];
          }
          if (total) excluded[name] = static_cast<double>(out) / static_cast<double>(total);
        }
        entry["outlier_excluded_by_label"] = excluded;
      }
      maps.push_back(entry);
    }
  }
  Json stats = Json::array();
  for (const auto& st : res.stats_per_scale) stats.push_back({{"mu", st.mu}, {"sigma", st.sigma}, {"count", st.count}});
  const Json summary = {{"loss", io::loss_to_json(res)}, {"error_stats", stats}, {"maps", maps}};
  rec.write_json("masks.json", summary);
  rec.finish(o.common.seed, kOk);
  print_report(s.out, o.common.format, summary, io::loss_csv(res));
  return kOk;
}

// ---------------------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  CommonOptions common;
  std::string pred, gt, labels, legend;
  double cap = 80.0;
  double min_depth = 1e-3;
  bool no_median_scaling = false;
  std::string scaling_region = "all";
  std::vector<double> crop;
  std::optional<double> fixed_scale;
  std::string pred_trajectory, gt_trajectory;
  int snippet = 5;
};

struct EvalSample {
  std::string name;
  std::string gt;
  std::string pred;
  std::string labels;
};

/// Ground-truth depth files of a directory: depth*.pfm, or depth*.png when no PFM shares the stem.
inline std::vector<std::string> depth_files(const fs::path& dir) {
  std::map<std::string, std::string> by_stem;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const fs::path p = e.path();
    const std::string stem = p.stem().string(), ext = p.extension().string();
    if (stem.rfind("depth", 0) != 0 || (ext != ".pfm" && ext != ".png")) continue;
    auto it = by_stem.find(stem);
    if (it == by_stem.end() || ext == ".pfm") by_stem[stem] = p.filename().string();
  }
  std::vector<std::string> out;
  for (const auto& [_, name] : by_stem) out.push_back(name);
  return out;
}

inline std::vector<EvalSample> eval_samples(const EvaluateOptions& o) {
  auto need = [](const std::string& p) {
    if (!fs::exists(p)) throw Error(Errc::io, "missing file '" + p + "'");
  };
  need(o.gt);
  need(o.pred);
  if (!o.labels.empty()) need(o.labels);
  if (!fs::is_directory(o.gt)) {
    if (fs::is_directory(o.pred)) throw Error(Errc::io, "--pred is a directory but --gt is a file");
    return {{fs::path(o.gt).filename().string(), o.gt, o.pred, o.labels}};
  }
  if (!fs::is_directory(o.pred)) throw Error(Errc::io, "--gt is a directory but --pred is a file");
  std::vector<EvalSample> out;
  for (const auto& name : depth_files(o.gt)) {
    EvalSample smp{name, (fs::path(o.gt) / name).string(), {}, {}};
    const std::string stem = fs::path(name).stem().string();
    for (const char* ext : {".pfm", ".png"}) {
      const fs::path p = fs::path(o.pred) / (stem + ext);
      if (fs::exists(p)) {
        smp.pred = p.string();
        break;
      }
    }
    if (smp.pred.empty()) throw Error(Errc::io, "missing prediction for '" + name + "' in " + o.pred);
    if (!o.labels.empty()) {
      const fs::path lp = fs::path(o.labels) / ("labels" + stem.substr(5) + ".png");
      if (!fs::exists(lp)) throw Error(Errc::io, "missing label map '" + lp.string() + "'");
      smp.labels = lp.string();
    }
    out.push_back(std::move(smp));
  }
  if (out.empty()) throw Error(Errc::io, "no depth files in '" + o.gt + "'");
  return out;
}

inline int run_evaluate(const EvaluateOptions& o, const std::vector<std::string>& argv, Streams s) {
  DepthEvalConfig cfg;
  cfg.cap = o.cap;
  cfg.min_depth = o.min_depth;
  cfg.median_scaling = !o.no_median_scaling;
  cfg.scaling_region = o.scaling_region == "background" ? ScalingRegion::background_only : ScalingRegion::all;
  if (!o.crop.empty()) {
    if (o.crop.size() != 4) throw Error(Errc::invalid_argument, "--crop needs top,bottom,left,right fractions");
    cfg.crop = CropFractions{o.crop[0], o.crop[1], o.crop[2], o.crop[3]};
  }
  cfg.fixed_scale = o.fixed_scale;
  cfg.validate();
  if (cfg.scaling_region == ScalingRegion::background_only && o.labels.empty())
    throw Error(Errc::invalid_argument, "--scaling-region background needs --labels");

  const auto samples = eval_samples(o);
  LabelLegend legend = motion_label_legend();
  if (!o.legend.empty()) {
    legend = io::legend_from_json(Json::parse(io::read_text(o.legend)));
  } else if (!o.labels.empty()) {
    const fs::path sidecar = fs::is_directory(o.labels) ? fs::path(o.labels) / "labels.json"
                                                        : fs::path(o.labels).replace_extension(".json");
    if (fs::exists(sidecar)) legend = io::legend_from_json(Json::parse(io::read_text(sidecar.string())));
  }

  std::vector<MetricsReport> per_sample;
  std::vector<RegionSample> region_samples;
  Json sample_json = Json::array();
  for (const auto& smp : samples) {
    const DepthMap gt = read_depth_any(smp.gt);
    const DepthMap pred = read_depth_any(smp.pred);
    if (pred.width() != gt.width() || pred.height() != gt.height())
      throw Error(Errc::bad_shape, "'" + smp.pred + "' is " + std::to_string(pred.width()) + "x" +
                                       std::to_string(pred.height()) + ", ground truth is " + std::to_string(gt.width()) +
                                       "x" + std::to_string(gt.height()));
    std::optional<LabelMap> labels;
    if (!smp.labels.empty()) {
      labels = io::read_gray_png(smp.labels);
      if (!labels->same_shape(gt.values)) throw Error(Errc::bad_shape, "'" + smp.labels + "' does not match the depth size");
    }
    std::optional<MaskMap> bg;
    if (cfg.scaling_region == ScalingRegion::background_only) {
      bg = MaskMap(gt.width(), gt.height(), 0);
      for (std::size_t i = 0; i < bg->size(); ++i) (*bg)[i] = (*labels)[i] == legend.front().first;
    }
    const MetricsReport m =
        depth_metrics(pred, gt, MaskMap(gt.width(), gt.height(), 1), cfg, bg ? &*bg : nullptr);
    per_sample.push_back(m);
    sample_json.push_back({{"name", smp.name}, {"metrics", io::metrics_to_json(m)}});
    if (labels) region_samples.push_back({pred, gt, *labels});
  }
  const MetricsReport overall = pixel_weighted_mean(per_sample);
  Json report = {{"samples", sample_json}, {"overall", io::metrics_to_json(overall)}};
  std::optional<RegionReport> regions;
  if (!region_samples.empty()) {
    regions = region_metrics(region_samples, cfg, legend);
    report["regions"] = io::regions_to_json(*regions);
  }
  if (!o.pred_trajectory.empty() || !o.gt_trajectory.empty()) {
    if (o.pred_trajectory.empty() || o.gt_trajectory.empty())
      throw Error(Errc::invalid_argument, "ATE needs both --pred-trajectory and --gt-trajectory");
    const AteResult ate =
        ate_snippets(io::read_trajectory(o.pred_trajectory), io::read_trajectory(o.gt_trajectory), o.snippet);
    report["ate"] = {{"mean", ate.mean}, {"std", ate.stddev}, {"snippet", o.snippet}, {"per_snippet", ate.per_snippet}};
  }

  RunRecorder rec("evaluate", argv, o.common.out);
  rec.config() = {{"evaluation", io::config_to_json(cfg)}, {"samples", samples.size()}};
  std::string csv = io::report_csv(overall, regions ? &*regions : nullptr);
  rec.write_json("report.json", report);
  rec.write_text("report.csv", csv);
  if (report.contains("ate")) {
    const std::string ate_csv = "ate_mean,ate_std,snippet\n" + io::csv_number(report["ate"]["mean"].get<double>()) + "," +
                                io::csv_number(report["ate"]["std"].get<double>()) + "," + std::to_string(o.snippet) + "\n";
    rec.write_text("ate.csv", ate_csv);
    csv += ate_csv;
  }
  rec.finish(o.common.seed, kOk);
  print_report(s.out, o.common.format, report, csv);
  return kOk;
}

// ---------------------------------------------------------------------------------------
// Entry point

inline int run(const std::vector<std::string>& args, Streams s = {});

/// Re-runs the command recorded in a manifest, optionally into another directory.
inline int run_replay(const std::string& manifest_path, const std::string& out, Streams s) {
  const Json m = Json::parse(io::read_text(manifest_path));
  std::vector<std::string> argv;
  try {
    argv = m.at("argv").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io, std::string("manifest has no argv: ") + e.what());
  }
  if (argv.empty() || argv.front() == "replay") throw Error(Errc::io, "manifest does not record a replayable command");
  if (!out.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == "--out") {
        argv[i + 1] = out;
        replaced = true;
      } else if (argv[i].rfind("--out=", 0) == 0) {
        argv[i] = "--out=" + out;
        replaced = true;
      }
    }
    if (!replaced) argv.insert(argv.end(), {"--out", out});
  }
  return run(argv, s);
}

/// `args` excludes the program name.
inline int run(const std::vector<std::string>& args, Streams s) {
  CLI::App app{"Masked photometric depth and pose recovery on synthetic scenes", "photomask"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PHOTOMASK_VERSION);

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Render a scene with ground truth");
  add_common(c_sim, sim.common);
  {
    auto* grp = c_sim->add_option_group("scene", "Scene source");
    grp->add_option("--preset", sim.preset, "Built-in scene name");
    grp->add_option("--spec", sim.spec, "Scene spec JSON file");
    grp->require_option(1);
  }
  c_sim->add_option("--bit-depth", sim.bit_depth, "Image PNG bit depth")
      ->check(CLI::IsMember({8, 16}))
      ->capture_default_str();

  OptimizeOptions opt;
  auto* c_opt = app.add_subcommand("optimize", "Recover depth and pose by direct photometric optimization");
  add_common(c_opt, opt.common);
  add_scene(c_opt, opt.scene);
  add_loss(c_opt, opt.loss);
  c_opt->add_option("--iters", opt.iters, "Gradient steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_opt->add_flag("--fix-pose", opt.fix_pose, "Hold poses at ground truth and optimize depth only");
  c_opt->add_flag("--fix-depth", opt.fix_depth, "Hold depth at ground truth and optimize poses only");
  c_opt->add_flag("--no-coarse-to-fine", opt.no_coarse_to_fine, "Optimize all scales jointly from the start");
  c_opt->add_option("--init-depth", opt.init_depth, "Initial constant depth (m)")->capture_default_str();
  c_opt->add_option("--checkpoint-every", opt.checkpoint_every, "Write combined masks every N iterations (0 = off)")
      ->capture_default_str();
  c_opt->add_option("--progress-every", opt.progress_every, "Print a progress line every N iterations (0 = off)")
      ->capture_default_str();

  AblateOptions abl;
  auto* c_abl = app.add_subcommand("ablate", "Compare mask variants against ground truth");
  add_common(c_abl, abl.common);
  add_scene(c_abl, abl.scene);
  add_loss(c_abl, abl.loss);
  c_abl->add_option("--iters", abl.iters, "Gradient steps per variant")->capture_default_str()->check(CLI::NonNegativeNumber);
  c_abl->add_flag("--fix-pose", abl.fix_pose, "Hold poses at ground truth");
  c_abl->add_option("--variants", abl.variants, "Variant names")
      ->delimiter(',')
      ->check(CLI::IsMember(variant_names()))
      ->capture_default_str();

  MasksOptions msk;
  auto* c_msk = app.add_subcommand("masks", "Export masks and error heatmaps for a given depth and pose");
  add_common(c_msk, msk.common);
  add_scene(c_msk, msk.scene);
  add_loss(c_msk, msk.loss);
  c_msk->add_option("--depth", msk.depth, "Target depth (.pfm or .png); default ground truth");
  c_msk->add_option("--poses", msk.poses, "Poses file, one line per source; default ground truth");

  EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "Depth metrics, per-region metrics and ATE");
  add_common(c_ev, ev.common);
  c_ev->add_option("--pred", ev.pred, "Predicted depth file or directory")->required();
  c_ev->add_option("--gt", ev.gt, "Ground-truth depth file or directory")->required();
  c_ev->add_option("--labels", ev.labels, "Label map file or directory");
  c_ev->add_option("--legend", ev.legend, "Label legend JSON");
  c_ev->add_option("--cap", ev.cap, "Maximum evaluated depth (m)")->capture_default_str();
  c_ev->add_option("--min-depth", ev.min_depth, "Minimum evaluated depth (m)")->capture_default_str();
  c_ev->add_flag("--no-median-scaling", ev.no_median_scaling, "Compare raw predictions");
  c_ev->add_option("--scaling-region", ev.scaling_region, "Pixels used for the median ratio")
      ->check(CLI::IsMember({"all", "background"}))
      ->capture_default_str();
  c_ev->add_option("--crop", ev.crop, "Crop fractions top,bottom,left,right")->delimiter(',')->expected(4);
  c_ev->add_option("--fixed-scale", ev.fixed_scale, "Multiply predictions by this instead of the median ratio");
  c_ev->add_option("--pred-trajectory", ev.pred_trajectory, "Predicted trajectory for ATE");
  c_ev->add_option("--gt-trajectory", ev.gt_trajectory, "Ground-truth trajectory for ATE");
  c_ev->add_option("--snippet", ev.snippet, "ATE window length")->capture_default_str();

  std::string manifest, replay_out;
  auto* c_rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_rep->add_option("--manifest", manifest, "manifest.json to replay")->required();
  c_rep->add_option("--out", replay_out, "Write outputs here instead of the recorded directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    s.out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    s.out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    s.out << PHOTOMASK_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    s.err << "photomask: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (*c_sim) return run_simulate(sim, args, s);
    if (*c_opt) return run_optimize(opt, args, s);
    if (*c_abl) return run_ablate(abl, args, s);
    if (*c_msk) return run_masks(msk, args, s);
    if (*c_ev) return run_evaluate(ev, args, s);
    if (*c_rep) return run_replay(manifest, replay_out, s);
  } catch (const Error& e) {
    s.err << "photomask: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    s.err << "photomask: malformed JSON: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    s.err << "photomask: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace photomask::cli

#endif  // PHOTOMASK_CLI_HPP

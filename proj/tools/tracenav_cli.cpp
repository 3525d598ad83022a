// tracenav: simulate, register, refine, guide, metrics and serve.

#include <csignal>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "tracenav/io.hpp"
#include "tracenav/phantom.hpp"
#include "tracenav/pipeline.hpp"
#include "tracenav/protocol.hpp"
#include "tracenav/serve.hpp"

namespace {

using namespace tracenav;
using io::json;

enum ExitCode : int {
  kOk = 0,
  kParse = 2,
  kDegenerate = 3,
  kEmptyTrace = 4,
  kRejected = 5,
};

class AlignmentRejected : public Error {
 public:
  AlignmentRejected(const std::string& what, json detail) : Error(what), detail_(std::move(detail)) {}
  const json& detail() const { return detail_; }

 private:
  json detail_;
};

int report_error(int code, const char* kind, const std::string& message, const json& detail = nullptr) {
  json j = {{"error", kind}, {"code", code}, {"message", message}};
  if (!detail.is_null()) j["detail"] = detail;
  std::cerr << j.dump() << std::endl;
  return code;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
  } else {
    io::write_text_file(path, text);
  }
}

// Pipeline settings: --config supplies a base, explicitly given flags win.
class ConfigOptions {
 public:
  explicit ConfigOptions(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_file_, "JSON file overriding default settings");
  }

  template <class T>
  ConfigOptions& add(const std::string& flag, const std::string& help, std::function<T&(PipelineConfig&)> field) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    appliers_.push_back([opt, value, field](PipelineConfig& c) {
      if (opt->count() > 0) field(c) = *value;
    });
    return *this;
  }

  ConfigOptions& path(const std::string& flag, const std::string& help, std::string PipelineConfig::*member) {
    return add<std::string>(flag, help, [member](PipelineConfig& c) -> std::string& { return c.*member; });
  }

  ConfigOptions& thresholds() {
    using F = std::function<double&(PipelineConfig&)>;
    using I = std::function<int&(PipelineConfig&)>;
    add<double>("--inlier-mm", "trace inlier gate", F([](PipelineConfig& c) -> double& { return c.trace.inlier_mm; }));
    add<double>("--removal-radius-mm", "run removal radius on a fault",
                F([](PipelineConfig& c) -> double& { return c.trace.removal_radius_mm; }));
    add<double>("--reentry-mm", "travel needed to resume tracing",
                F([](PipelineConfig& c) -> double& { return c.trace.reentry_mm; }));
    add<double>("--projection-band-mm", "normal projection band",
                F([](PipelineConfig& c) -> double& { return c.trace.projection_band_mm; }));
    add<double>("--voxel-coarse-mm", "coarsest voxel size", F([](PipelineConfig& c) -> double& { return c.voxel_coarse_mm; }));
    add<double>("--voxel-fine-mm", "finest voxel size", F([](PipelineConfig& c) -> double& { return c.voxel_fine_mm; }));
    add<int>("--scale-levels", "number of voxel levels", I([](PipelineConfig& c) -> int& { return c.scale_levels; }));
    add<double>("--k-corr", "correspondence radius per unit voxel size", F([](PipelineConfig& c) -> double& { return c.k_corr; }));
    add<int>("--max-iterations", "ICP iteration cap", I([](PipelineConfig& c) -> int& { return c.icp.max_iterations; }));
    add<double>("--close-mm", "score close threshold", F([](PipelineConfig& c) -> double& { return c.score.close_mm; }));
    add<double>("--min-fitness", "rejection fitness floor", F([](PipelineConfig& c) -> double& { return c.score.min_fitness; }));
    add<double>("--max-rmse-mm", "rejection RMSE ceiling", F([](PipelineConfig& c) -> double& { return c.score.max_rmse_mm; }));
    return *this;
  }

  ConfigOptions& guidance() {
    using F = std::function<double&(PipelineConfig&)>;
    mode_opt_ = app_->add_option("--mode", mode_, "marking or insertion");
    add<double>("--on-trajectory-mm", "entry offset for on-trajectory",
                F([](PipelineConfig& c) -> double& { return c.guidance.on_trajectory_offset_mm; }));
    add<double>("--on-trajectory-deg", "angle for on-trajectory",
                F([](PipelineConfig& c) -> double& { return c.guidance.on_trajectory_angle_deg; }));
    return *this;
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    if (!config_file_.empty()) c = config_from_json(io::read_json_file(config_file_));
    for (const auto& apply : appliers_) apply(c);
    if (mode_opt_ != nullptr && mode_opt_->count() > 0) c.mode = io::parse_mode(mode_);
    c.validate();
    return c;
  }

 private:
  CLI::App* app_;
  std::string config_file_;
  std::string mode_;
  CLI::Option* mode_opt_ = nullptr;
  std::vector<std::function<void(PipelineConfig&)>> appliers_;
};

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out_dir = ".";
  SimConfig sim;
  bool noiseless = false;
};

int run_simulate(const SimulateArgs& args) {
  SimConfig cfg = args.sim;
  if (args.noiseless) {
    cfg.trace_noise_sigma = 0.0;
    cfg.landmark_noise_sigma = 0.0;
  }
  cfg.validate();
  std::filesystem::create_directories(args.out_dir);
  const auto at = [&](const char* name) { return (std::filesystem::path(args.out_dir) / name).string(); };

  const Phantom ph = generate_phantom(cfg);
  io::write_ply(at("surface.ply"), ph.surface);
  io::write_text_file(at("landmarks.json"), io::dump(io::landmarks_json(ph.landmarks)));
  io::write_text_file(at("landmarks_digitized.json"), io::dump(io::landmarks_json(simulate_landmarks(ph, cfg))));
  io::write_text_file(at("plans.json"), io::dump(io::plans_json(ph.plans)));
  io::write_text_file(at("trace.jsonl"), io::format_trace(simulate_trace(ph, cfg)));

  json placements = json::array();
  for (const auto& t : simulate_trials(ph, cfg)) {
    io::PlacementRecord rec;
    rec.plan_id = t.plan_id;
    rec.condition = t.condition;
    rec.user = t.user;
    rec.placement = t.insertion.result;
    rec.rod_samples = t.insertion.rod_samples;
    rec.marking_time = t.marking_time;
    rec.insertion_time = t.insertion_time;
    placements.push_back(io::placement_record_json(rec));
  }
  io::write_text_file(at("placements.json"), io::dump(placements));

  json truth = io::transform_json(ph.true_pose);
  truth["seed"] = cfg.seed;
  truth["trace_noise_sigma"] = cfg.trace_noise_sigma;
  truth["landmark_noise_sigma"] = cfg.landmark_noise_sigma;
  truth["liftoff_count"] = cfg.liftoff_count;
  truth["surface_points"] = cfg.surface_points;
  io::write_text_file(at("truth.json"), io::dump(truth));
  return kOk;
}

int run_register(const PipelineConfig& cfg, const std::string& out) {
  const auto [reg, labels] =
      register_landmark_files(io::read_landmarks(cfg.model_landmarks), io::read_landmarks(cfg.landmarks));
  emit(out, io::dump(landmark_registration_json(reg, labels)));
  return kOk;
}

int run_refine(const PipelineConfig& cfg, const std::string& out) {
  const auto model = std::make_shared<const SurfaceModel>(io::read_ply(cfg.surface));
  const LandmarkSet model_lm = io::read_landmarks(cfg.model_landmarks);
  const LandmarkSet digitized = io::read_landmarks(cfg.landmarks);
  const auto trace = io::read_trace(cfg.trace_path);
  const PipelineResult result = run_pipeline(model, model_lm, digitized, trace, cfg);
  const json j = pipeline_json(result);
  if (result.rejected()) throw AlignmentRejected("final alignment rejected", j);
  emit(out, io::dump(j));
  return kOk;
}

struct GuideArgs {
  int plan_id = 0;
  std::vector<double> tip;
  std::vector<double> direction;
  bool identity = false;
};

protocol::GuidanceService load_service(const PipelineConfig& cfg, bool identity) {
  const auto plans = io::read_plans(cfg.plans);
  const RigidTransform m2p = identity ? RigidTransform::identity() : read_model_to_patient(cfg.transform);
  return protocol::GuidanceService(plans, m2p, cfg.guidance, cfg.overlay, cfg.mode);
}

int run_guide(const PipelineConfig& cfg, const GuideArgs& args) {
  const auto service = load_service(cfg, args.identity);
  const Point3 tip(args.tip[0], args.tip[1], args.tip[2]);
  const Vector3 dir(args.direction[0], args.direction[1], args.direction[2]);
  if (!is_finite(tip) || !is_finite(dir) || dir.norm() == 0.0) throw ParseError("tip and direction must be finite, direction nonzero");
  const json frame = service.frame_json(service.find(args.plan_id), {tip, UnitVector3(dir)}, cfg.mode);
  std::cout << frame.dump() << std::endl;
  return kOk;
}

int run_metrics(const PipelineConfig& cfg, const std::string& out, const std::string& table) {
  const auto ev = evaluate_metrics(io::read_plans(cfg.plans), io::read_placements(cfg.placements));
  emit(out, io::dump(metrics_json(ev)));
  if (!table.empty()) {
    emit(table, metrics_table(ev));
  } else if (!out.empty() && out != "-") {
    std::cout << metrics_table(ev) << std::flush;
  }
  return kOk;
}

serve::GuidanceServer* g_server = nullptr;

int run_serve(const PipelineConfig& cfg, bool identity) {
  auto service = std::make_shared<const protocol::GuidanceService>(load_service(cfg, identity));
  serve::GuidanceServer server(service, cfg.host, static_cast<unsigned short>(cfg.port));
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cout << json{{"listening", cfg.host + ":" + std::to_string(server.port())}, {"port", server.port()}}.dump()
            << std::endl;
  server.run();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark and surface-trace registration, trajectory guidance and placement metrics"};
  app.require_subcommand(1);
  std::string out;
  std::string table;

  // simulate
  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic phantom dataset");
  simulate->add_option("--out-dir,-o", sim.out_dir, "output directory")->capture_default_str();
  simulate->add_option("--seed", sim.sim.seed, "random seed")->capture_default_str();
  simulate->add_option("--surface-points", sim.sim.surface_points, "model surface samples")->capture_default_str();
  simulate->add_option("--trace-noise", sim.sim.trace_noise_sigma, "trace noise sigma, mm")->capture_default_str();
  simulate->add_option("--landmark-noise", sim.sim.landmark_noise_sigma, "landmark noise sigma, mm")->capture_default_str();
  simulate->add_option("--liftoffs", sim.sim.liftoff_count, "lift-off excursions")->capture_default_str();
  simulate->add_option("--liftoff-height", sim.sim.liftoff_height, "lift-off height, mm")->capture_default_str();
  simulate->add_option("--entry-sigma", sim.sim.insertion_entry_sigma, "insertion entry sigma, mm")->capture_default_str();
  simulate->add_option("--angle-sigma", sim.sim.insertion_angle_sigma, "insertion angle sigma, deg")->capture_default_str();
  simulate->add_option("--depth-sigma", sim.sim.insertion_depth_sigma, "insertion depth sigma, mm")->capture_default_str();
  simulate->add_option("--users", sim.sim.users, "simulated users")->capture_default_str();
  simulate->add_option("--trials", sim.sim.trials_per_condition, "trials per user and condition")->capture_default_str();
  simulate->add_flag("--noiseless", sim.noiseless, "zero trace and landmark noise");

  // register
  auto* reg = app.add_subcommand("register", "Landmark registration only");
  ConfigOptions reg_cfg(reg);
  reg_cfg.path("--model-landmarks", "model-frame landmarks JSON", &PipelineConfig::model_landmarks)
      .path("--landmarks", "digitised landmarks JSON", &PipelineConfig::landmarks);
  reg->add_option("--out", out, "output file (default stdout)");

  // refine
  auto* refine = app.add_subcommand("refine", "Landmarks, trace filtering and multiscale ICP");
  ConfigOptions refine_cfg(refine);
  refine_cfg.path("--surface", "model surface PLY", &PipelineConfig::surface)
      .path("--model-landmarks", "model-frame landmarks JSON", &PipelineConfig::model_landmarks)
      .path("--landmarks", "digitised landmarks JSON", &PipelineConfig::landmarks)
      .path("--trace", "trace JSONL", &PipelineConfig::trace_path)
      .thresholds();
  refine->add_option("--out", out, "transform.json path (default stdout)");

  // guide
  GuideArgs guide_args;
  auto* guide = app.add_subcommand("guide", "One guidance frame for a tool pose");
  ConfigOptions guide_cfg(guide);
  guide_cfg.path("--plans", "plans JSON", &PipelineConfig::plans)
      .path("--transform", "transform.json", &PipelineConfig::transform)
      .guidance();
  guide->add_option("--plan-id", guide_args.plan_id, "plan id")->capture_default_str();
  guide->add_option("--tip", guide_args.tip, "tool tip x y z, mm")->expected(3)->required();
  guide->add_option("--direction", guide_args.direction, "tool direction x y z")->expected(3)->required();
  guide->add_flag("--model-frame", guide_args.identity, "pose is in the model frame; ignore --transform");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Placement metrics and paired comparison");
  ConfigOptions metrics_cfg(metrics);
  metrics_cfg.path("--plans", "plans JSON", &PipelineConfig::plans)
      .path("--placements", "placements JSON", &PipelineConfig::placements);
  metrics->add_option("--out", out, "metrics JSON path (default stdout)");
  metrics->add_option("--table", table, "text table path");

  // serve
  bool serve_identity = false;
  auto* serve_cmd = app.add_subcommand("serve", "Websocket guidance service");
  ConfigOptions serve_cfg(serve_cmd);
  serve_cfg.path("--plans", "plans JSON", &PipelineConfig::plans)
      .path("--transform", "transform.json", &PipelineConfig::transform)
      .path("--host", "bind address", &PipelineConfig::host)
      .add<int>("--port", "port (0 picks a free one)", std::function<int&(PipelineConfig&)>([](PipelineConfig& c) -> int& { return c.port; }))
      .guidance();
  serve_cmd->add_flag("--model-frame", serve_identity, "serve plans in the model frame; ignore --transform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kParse;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*reg) return run_register(reg_cfg.resolve(), out);
    if (*refine) return run_refine(refine_cfg.resolve(), out);
    if (*guide) return run_guide(guide_cfg.resolve(), guide_args);
    if (*metrics) return run_metrics(metrics_cfg.resolve(), out, table);
    if (*serve_cmd) return run_serve(serve_cfg.resolve(), serve_identity);
  } catch (const AlignmentRejected& e) {
    return report_error(kRejected, "alignment_rejected", e.what(), e.detail());
  } catch (const EmptyTrace& e) {
    return report_error(kEmptyTrace, "empty_trace", e.what());
  } catch (const DegenerateInput& e) {
    return report_error(kDegenerate, "degenerate_input", e.what());
  } catch (const InputError& e) {
    return report_error(kParse, "parse", e.what());
  } catch (const std::exception& e) {
    return report_error(kParse, "parse", e.what());
  }
  return kParse;
}

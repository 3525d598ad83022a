#pragma once

#include <algorithm>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "tracenav/icp.hpp"
#include "tracenav/io.hpp"
#include "tracenav/metrics.hpp"
#include "tracenav/rigid_fit.hpp"
#include "tracenav/trace_filter.hpp"

namespace tracenav {

// Every tunable of the registration and guidance stages plus the file and
// service settings used by the command-line tool. Defaults are the
// published constants.
struct PipelineConfig {
  TraceFilterConfig trace;
  double voxel_coarse_mm = 10.0;
  double voxel_fine_mm = 0.1;
  int scale_levels = 15;
  double k_corr = 3.0;
  IcpConfig icp;
  ScoreConfig score;
  GuidanceConfig guidance;
  OverlayConfig overlay;
  GuidanceMode mode = GuidanceMode::Marking;

  std::string host = "127.0.0.1";
  int port = 8765;

  std::string surface = "surface.ply";
  std::string model_landmarks = "landmarks.json";
  std::string landmarks = "landmarks_digitized.json";
  std::string trace_path = "trace.jsonl";
  std::string plans = "plans.json";
  std::string transform = "transform.json";
  std::string placements = "placements.json";

  MultiscaleConfig multiscale() const {
    MultiscaleConfig m;
    m.schedule = scale_schedule(voxel_coarse_mm, voxel_fine_mm, scale_levels);
    m.k_corr = k_corr;
    m.icp = icp;
    m.score = score;
    return m;
  }

  void validate() const {
    const auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw InputError(std::string(name) + " must be positive");
    };
    positive(trace.inlier_mm, "inlier_mm");
    positive(trace.removal_radius_mm, "removal_radius_mm");
    positive(trace.reentry_mm, "reentry_mm");
    if (!(trace.projection_band_mm >= 0.0)) throw InputError("projection_band_mm must be non-negative");
    positive(k_corr, "k_corr");
    positive(score.close_mm, "close_mm");
    positive(score.rmse_scale_mm, "rmse_scale_mm");
    if (icp.max_iterations < 1) throw InputError("max_iterations must be at least 1");
    if (port < 0 || port > 65535) throw InputError("port out of range");
    (void)scale_schedule(voxel_coarse_mm, voxel_fine_mm, scale_levels);
  }
};

namespace detail {

template <class T>
void override_field(const io::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const io::json::exception&) {
    throw ParseError(std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace detail

// Fields named in `j` replace those of `base`; unknown keys are an error so
// typos do not silently fall back to defaults.
inline PipelineConfig config_from_json(const io::json& j, PipelineConfig base = {}) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  static const std::vector<std::string> known = {
      "inlier_mm", "removal_radius_mm", "reentry_mm", "projection_band_mm", "voxel_coarse_mm",
      "voxel_fine_mm", "scale_levels", "k_corr", "max_iterations", "fitness_tolerance",
      "rmse_tolerance", "close_mm", "fitness_weight", "rmse_weight", "rmse_scale_mm",
      "min_fitness", "max_rmse_mm", "on_trajectory_offset_mm", "on_trajectory_angle_deg",
      "max_valid_angle_deg", "disc_diameter_mm", "cylinder_diameter_mm", "protrusion_mm",
      "sphere_diameter_mm", "mode", "host", "port", "surface", "model_landmarks", "landmarks",
      "trace", "plans", "transform", "placements"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParseError("config: unknown key '" + key + "'");
    }
  }
  PipelineConfig c = std::move(base);
  detail::override_field(j, "inlier_mm", c.trace.inlier_mm);
  detail::override_field(j, "removal_radius_mm", c.trace.removal_radius_mm);
  detail::override_field(j, "reentry_mm", c.trace.reentry_mm);
  detail::override_field(j, "projection_band_mm", c.trace.projection_band_mm);
  detail::override_field(j, "voxel_coarse_mm", c.voxel_coarse_mm);
  detail::override_field(j, "voxel_fine_mm", c.voxel_fine_mm);
  detail::override_field(j, "scale_levels", c.scale_levels);
  detail::override_field(j, "k_corr", c.k_corr);
  detail::override_field(j, "max_iterations", c.icp.max_iterations);
  detail::override_field(j, "fitness_tolerance", c.icp.fitness_tolerance);
  detail::override_field(j, "rmse_tolerance", c.icp.rmse_tolerance);
  detail::override_field(j, "close_mm", c.score.close_mm);
  detail::override_field(j, "fitness_weight", c.score.fitness_weight);
  detail::override_field(j, "rmse_weight", c.score.rmse_weight);
  detail::override_field(j, "rmse_scale_mm", c.score.rmse_scale_mm);
  detail::override_field(j, "min_fitness", c.score.min_fitness);
  detail::override_field(j, "max_rmse_mm", c.score.max_rmse_mm);
  detail::override_field(j, "on_trajectory_offset_mm", c.guidance.on_trajectory_offset_mm);
  detail::override_field(j, "on_trajectory_angle_deg", c.guidance.on_trajectory_angle_deg);
  detail::override_field(j, "max_valid_angle_deg", c.guidance.max_valid_angle_deg);
  detail::override_field(j, "disc_diameter_mm", c.overlay.disc_diameter_mm);
  detail::override_field(j, "cylinder_diameter_mm", c.overlay.cylinder_diameter_mm);
  detail::override_field(j, "protrusion_mm", c.overlay.protrusion_mm);
  detail::override_field(j, "sphere_diameter_mm", c.overlay.sphere_diameter_mm);
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw ParseError("config: 'mode' must be a string");
    c.mode = io::parse_mode(j.at("mode").get<std::string>());
  }
  detail::override_field(j, "host", c.host);
  detail::override_field(j, "port", c.port);
  detail::override_field(j, "surface", c.surface);
  detail::override_field(j, "model_landmarks", c.model_landmarks);
  detail::override_field(j, "landmarks", c.landmarks);
  detail::override_field(j, "trace", c.trace_path);
  detail::override_field(j, "plans", c.plans);
  detail::override_field(j, "transform", c.transform);
  detail::override_field(j, "placements", c.placements);
  return c;
}

// ---------------------------------------------------------------------------
// Registration pipeline

struct TraceSummary {
  std::size_t samples = 0;
  std::size_t accepted = 0;  // accepted or resumed, before removals
  std::size_t rejected = 0;
  std::size_t excursions = 0;
  std::size_t reentry_candidates = 0;
  std::size_t resumes = 0;
  std::size_t removed = 0;
  std::size_t live = 0;
  std::size_t representative = 0;
};

struct PipelineResult {
  LandmarkRegistration landmarks;  // digitised (patient) -> model
  std::vector<std::string> landmark_labels;
  TraceSummary trace;
  std::vector<Point3> traced_patient;  // representative points, patient frame
  RefineResult refine;                 // best maps patient -> model

  RigidTransform model_to_patient() const { return refine.model_to_patient(); }
  bool rejected() const { return refine.best_score.rejected; }
};

// Landmark registration of digitised patient points onto the model; labels
// are paired by name.
inline std::pair<LandmarkRegistration, std::vector<std::string>> register_landmark_files(
    const LandmarkSet& model_landmarks, const LandmarkSet& digitized) {
  const auto [src, dst] = io::pair_landmarks(digitized, model_landmarks);
  return {register_landmarks(src, dst), src.labels};
}

/**
 * Landmark seed, trace filtering and multiscale refinement.
 *
 * Trace samples are in the patient frame. Each one is mapped into the model
 * frame by the landmark transform T0 before filtering; representative points
 * are mapped back so refinement starts from T0 itself.
 *
 * Throws DegenerateInput for unusable landmarks and EmptyTrace when no
 * sample survives the filter.
 */
inline PipelineResult run_pipeline(const std::shared_ptr<const SurfaceModel>& model,
                                   const LandmarkSet& model_landmarks, const LandmarkSet& digitized,
                                   std::span<const io::TraceRecord> trace, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult out;
  std::tie(out.landmarks, out.landmark_labels) = register_landmark_files(model_landmarks, digitized);
  const RigidTransform& t0 = out.landmarks.transform;

  TraceSession session(model, cfg.trace);
  for (const auto& rec : trace) {
    const TraceEvent ev = session.ingest(t0.apply(rec.p));
    ++out.trace.samples;
    switch (ev.kind) {
      case TraceEventKind::Accepted: ++out.trace.accepted; break;
      case TraceEventKind::RejectedOutlier: ++out.trace.rejected; break;
      case TraceEventKind::WentOutOfBounds:
        ++out.trace.excursions;
        out.trace.removed += ev.removed_count.value_or(0);
        break;
      case TraceEventKind::ReentryCandidateSet: ++out.trace.reentry_candidates; break;
      case TraceEventKind::ResumedInBounds:
        ++out.trace.accepted;
        ++out.trace.resumes;
        break;
    }
  }
  out.trace.live = session.live_count();
  const PointCloud rep = session.representative_points();
  out.trace.representative = rep.size();
  out.traced_patient = apply_transform(t0.inverse(), std::span<const Point3>(rep.points));
  out.refine = multiscale_refine(out.traced_patient, model->cloud, model->index, t0, cfg.multiscale());
  return out;
}

// Landmark-only result: the transform placing the model in the patient frame.
inline io::json landmark_registration_json(const LandmarkRegistration& reg, const std::vector<std::string>& labels) {
  io::json j = io::transform_json(reg.transform.inverse());
  j["patient_to_model"] = io::transform_json(reg.transform);
  j["fre"] = reg.fre;
  j["landmarks"] = labels;
  return j;
}

// transform.json: top-level rotation (row-major) and translation map the
// model into the patient frame.
inline io::json pipeline_json(const PipelineResult& r) {
  io::json j = io::transform_json(r.model_to_patient());
  j["patient_to_model"] = io::transform_json(r.refine.best);
  j["fre"] = r.landmarks.fre;
  j["landmarks"] = r.landmark_labels;
  j["landmark_transform"] = io::transform_json(r.landmarks.transform.inverse());
  j["score"] = r.refine.best_score.score;
  j["fitness"] = r.refine.best_score.fitness;
  j["rmse"] = r.refine.best_score.rmse;
  j["rejected"] = r.refine.best_score.rejected;
  j["initial"] = io::score_json(r.refine.initial_score);
  j["trace"] = {{"samples", r.trace.samples},
                {"accepted", r.trace.accepted},
                {"rejected", r.trace.rejected},
                {"excursions", r.trace.excursions},
                {"reentry_candidates", r.trace.reentry_candidates},
                {"resumes", r.trace.resumes},
                {"removed", r.trace.removed},
                {"live", r.trace.live},
                {"representative_points", r.trace.representative}};
  io::json scales = io::json::array();
  for (const auto& s : r.refine.scales) scales.push_back(io::scale_record_json(s));
  j["scales"] = scales;
  return j;
}

// Model-to-patient transform from a transform.json or register output.
inline RigidTransform read_model_to_patient(const std::string& path) {
  return io::parse_transform(io::read_json_file(path), path);
}

// ---------------------------------------------------------------------------
// Placement metrics and paired comparison

struct TrialReport {
  io::PlacementRecord record;
  PlacementResult placement;  // refitted from rod samples when they exist
  MetricsReport report;
};

struct MetricSummary {
  std::string name;
  std::vector<UserMedians> medians;
  double tool_tracking_median = 0.0;  // median of per-user medians
  double in_situ_median = 0.0;
  WilcoxonResult test;
};

struct MetricsEvaluation {
  std::vector<TrialReport> trials;
  std::vector<MetricSummary> summary;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "entry_offset",        "angular_deviation", "target_tip_error", "target_depth_error",
      "signed_depth_error",  "target_radial_error", "marking_time",   "insertion_time"};
  return names;
}

inline std::optional<double> metric_value(const MetricsReport& m, const std::string& name) {
  if (name == "entry_offset") return m.entry_offset;
  if (name == "angular_deviation") return m.angular_deviation;
  if (name == "target_tip_error") return m.target_tip_error;
  if (name == "target_depth_error") return m.target_depth_error;
  if (name == "signed_depth_error") return m.signed_depth_error;
  if (name == "target_radial_error") return m.target_radial_error;
  if (name == "marking_time") return m.marking_time;
  if (name == "insertion_time") return m.insertion_time;
  throw InputError("unknown metric '" + name + "'");
}

/**
 * Per-trial metrics against their plans, then for every metric present on
 * all trials: per-user medians per condition and the exact paired test of
 * tool tracking against in situ. Metrics missing from any trial (the timing
 * fields are optional) are left out of the summary.
 */
inline MetricsEvaluation evaluate_metrics(const std::vector<NamedPlan>& plans,
                                          const std::vector<io::PlacementRecord>& records) {
  if (records.empty()) throw InputError("no placements to evaluate");
  MetricsEvaluation ev;
  for (const auto& rec : records) {
    const TrajectoryPlan& plan = io::find_plan(plans, rec.plan_id).plan;
    TrialReport t{rec, rec.rod_samples.empty() ? *rec.placement : placement_from_rod(plan, rec.rod_samples), {}};
    t.report = placement_metrics(plan, t.placement);
    t.report.marking_time = rec.marking_time;
    t.report.insertion_time = rec.insertion_time;
    ev.trials.push_back(std::move(t));
  }
  for (const auto& name : metric_names()) {
    std::vector<PairedSample> samples;
    bool complete = true;
    for (const auto& t : ev.trials) {
      const auto v = metric_value(t.report, name);
      if (!v) {
        complete = false;
        break;
      }
      samples.push_back({t.record.user, t.record.condition, {*v}});
    }
    if (!complete) continue;
    MetricSummary s;
    s.name = name;
    s.medians = collapse_medians(samples);
    std::vector<double> tt, is;
    for (const auto& m : s.medians) {
      tt.push_back(m.tool_tracking);
      is.push_back(m.in_situ);
    }
    s.tool_tracking_median = median(tt);
    s.in_situ_median = median(is);
    s.test = paired_test(s.medians);
    ev.summary.push_back(std::move(s));
  }
  return ev;
}

inline io::json metrics_json(const MetricsEvaluation& ev) {
  io::json trials = io::json::array();
  for (const auto& t : ev.trials) {
    trials.push_back({{"plan_id", t.record.plan_id},
                      {"condition", to_string(t.record.condition)},
                      {"user", t.record.user},
                      {"placement", io::placement_result_json(t.placement)},
                      {"metrics", io::metrics_report_json(t.report)}});
  }
  io::json summary = io::json::array();
  for (const auto& s : ev.summary) {
    io::json users = io::json::array();
    for (const auto& m : s.medians) {
      users.push_back({{"user", m.user}, {"tool_tracking", m.tool_tracking}, {"in_situ", m.in_situ}});
    }
    summary.push_back({{"metric", s.name},
                       {"n_users", s.medians.size()},
                       {"tool_tracking_median", s.tool_tracking_median},
                       {"in_situ_median", s.in_situ_median},
                       {"statistic", s.test.statistic},
                       {"w_plus", s.test.w_plus},
                       {"p_value", s.test.p_value},
                       {"n_nonzero", s.test.n_nonzero},
                       {"exact", s.test.exact},
                       {"all_zero", s.test.all_zero},
                       {"user_medians", users}});
  }
  return {{"trials", trials}, {"summary", summary}};
}

// Fixed-width summary table, one row per metric.
inline std::string metrics_table(const MetricsEvaluation& ev) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %5s %12s %12s %8s %10s\n", "metric", "users", "tt_median",
                "is_median", "W", "p");
  out += line;
  for (const auto& s : ev.summary) {
    std::snprintf(line, sizeof line, "%-20s %5zu %12.4f %12.4f %8.1f %10.6f\n", s.name.c_str(), s.medians.size(),
                  s.tool_tracking_median, s.in_situ_median, s.test.statistic, s.test.p_value);
    out += line;
  }
  return out;
}

}  // namespace tracenav

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tracenav/geometry.hpp"
#include "tracenav/guidance.hpp"
#include "tracenav/metrics.hpp"
#include "tracenav/neighbor_index.hpp"
#include "tracenav/random.hpp"
#include "tracenav/rigid_fit.hpp"

namespace tracenav {

// Model frame: +x patient right, +y anterior, +z superior; origin near the
// head centre. Millimetres throughout.

// Implicit head surface F(p) = 0 with F < 0 inside: a superellipsoid
//   |x/a|^e + |y/b|^e + |z/c|^e - 1
// minus Gaussian bumps (raised nose, brows, ears and cheekbones; recessed
// orbits) that give the forehead patch enough relief to pin down rotation.
struct HeadShape {
  struct Bump {
    Point3 center;
    double sigma;
    double amplitude;
  };

  double a = 75.0;  // half width
  double b = 95.0;  // half length (front-back)
  double c = 70.0;  // half height
  double exponent = 2.5;
  std::vector<Bump> bumps = {
      {{0.0, 90.0, -30.0}, 11.0, 0.35},     // nose
      {{0.0, 96.0, -8.0}, 6.0, 0.20},       // nasal bridge
      {{30.0, 90.0, 10.0}, 7.0, 0.20},      // right brow ridge
      {{-30.0, 90.0, 10.0}, 7.0, 0.20},     // left brow ridge
      {{0.0, 93.0, 8.0}, 8.0, 0.08},        // glabella
      {{32.0, 92.0, -6.0}, 9.0, -0.35},     // right orbit
      {{-32.0, 92.0, -6.0}, 9.0, -0.35},    // left orbit
      {{28.0, 78.0, 45.0}, 12.0, 0.10},     // right frontal boss
      {{-28.0, 78.0, 45.0}, 12.0, 0.10},    // left frontal boss
      {{74.0, 0.0, -10.0}, 10.0, 0.30},     // right ear
      {{-74.0, 0.0, -10.0}, 10.0, 0.30},    // left ear
      {{45.0, 65.0, -20.0}, 12.0, 0.12},    // right cheekbone
      {{-45.0, 65.0, -20.0}, 12.0, 0.12},   // left cheekbone
  };

  double value(const Point3& p) const {
    const double e = exponent;
    double f = std::pow(std::abs(p.x() / a), e) + std::pow(std::abs(p.y() / b), e) +
               std::pow(std::abs(p.z() / c), e) - 1.0;
    for (const auto& bump : bumps) {
      f -= bump.amplitude * std::exp(-(p - bump.center).squaredNorm() / (2.0 * bump.sigma * bump.sigma));
    }
    return f;
  }

  Vector3 gradient(const Point3& p) const {
    const double e = exponent;
    const std::array<double, 3> axes{a, b, c};
    Vector3 g;
    for (int i = 0; i < 3; ++i) {
      const double u = p[i] / axes[static_cast<std::size_t>(i)];
      g[i] = e * std::pow(std::abs(u), e - 1.0) * (u < 0.0 ? -1.0 : 1.0) / axes[static_cast<std::size_t>(i)];
    }
    for (const auto& bump : bumps) {
      const double s2 = bump.sigma * bump.sigma;
      const double w = bump.amplitude * std::exp(-(p - bump.center).squaredNorm() / (2.0 * s2));
      g += w * (p - bump.center) / s2;
    }
    return g;
  }

  UnitVector3 normal(const Point3& p) const { return UnitVector3(gradient(p)); }

  // First-order distance estimate |F| / |grad F|.
  double distance_estimate(const Point3& p) const { return std::abs(value(p)) / gradient(p).norm(); }

  // Outermost surface point along the ray from the origin in direction `u`.
  Point3 surface_along(const Vector3& u_in) const {
    const Vector3 u = u_in.normalized();
    const double e = exponent;
    const double base = std::pow(std::pow(std::abs(u.x() / a), e) + std::pow(std::abs(u.y() / b), e) +
                                     std::pow(std::abs(u.z() / c), e),
                                 -1.0 / e);
    constexpr double step = 1.0;
    double hi = base + 30.0;
    while (value(hi * u) <= 0.0) hi += 30.0;
    double lo = hi - step;
    while (value(lo * u) > 0.0) {
      hi = lo;
      lo -= step;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (value(mid * u) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi) * u;
  }
};

struct SimConfig {
  std::uint64_t seed = 42;
  std::size_t surface_points = 100000;
  double trace_noise_sigma = 0.3;     // mm
  double landmark_noise_sigma = 0.5;  // mm
  int liftoff_count = 3;
  double liftoff_height = 15.0;  // mm, must exceed the 10 mm inlier gate
  double insertion_entry_sigma = 1.5;  // mm
  double insertion_angle_sigma = 2.0;  // degrees
  double insertion_depth_sigma = 2.0;  // mm
  double sample_spacing = 0.8;         // mm between trace samples
  double sample_rate_hz = 60.0;
  int users = 9;
  int trials_per_condition = 6;
  double in_situ_sigma_scale = 3.0;  // in-situ placements are this much noisier
  double marking_time_s = 13.0;      // median per entry mark
  double insertion_time_tool_s = 45.0;
  double insertion_time_in_situ_s = 25.0;
  double time_log_sigma = 0.4;  // log-normal spread of both durations

  void validate() const {
    if (trace_noise_sigma < 0 || landmark_noise_sigma < 0 || insertion_entry_sigma < 0 ||
        insertion_angle_sigma < 0 || insertion_depth_sigma < 0) {
      throw InputError("simulation sigmas must be non-negative");
    }
    if (!(liftoff_height > 10.0)) throw InputError("liftoff height must exceed 10 mm");
    if (liftoff_count < 0) throw InputError("liftoff count must be non-negative");
    if (surface_points < 100) throw InputError("surface needs at least 100 points");
    if (!(sample_spacing > 0.0) || !(sample_rate_hz > 0.0)) throw InputError("trace sampling must be positive");
    if (users < 1 || trials_per_condition < 1) throw InputError("need at least one user and trial");
    if (!(marking_time_s > 0.0) || !(insertion_time_tool_s > 0.0) || !(insertion_time_in_situ_s > 0.0) ||
        time_log_sigma < 0.0) {
      throw InputError("simulated durations must be positive");
    }
  }
};

inline const std::array<std::string, 6>& canonical_landmark_labels() {
  static const std::array<std::string, 6> labels{
      "right_intertragal_notch", "left_intertragal_notch", "right_lateral_canthus",
      "left_lateral_canthus",    "right_medial_canthus",   "left_medial_canthus",
  };
  return labels;
}

struct NamedPlan {
  int id = 0;
  std::string side;  // "left" or "right"
  TrajectoryPlan plan;
};

struct Phantom {
  HeadShape shape;
  PointCloud surface;      // model frame, outward normals
  LandmarkSet landmarks;   // model frame
  std::vector<NamedPlan> plans;
  RigidTransform true_pose;  // model -> world
};

namespace detail {

inline std::vector<NamedPlan> make_plans(const HeadShape& shape) {
  constexpr double kBoneDepth = 6.0;  // scalp + skull along the trajectory
  std::vector<NamedPlan> plans;
  int id = 0;
  for (const char* side : {"left", "right"}) {
    const double sx = std::string(side) == "left" ? -1.0 : 1.0;
    for (int k = 0; k < 6; ++k) {
      const double lateral = 0.16 + 0.05 * (k % 3);
      const double anterior = 0.20 + 0.08 * (k / 3);
      const Point3 skin = shape.surface_along(Vector3(sx * lateral, anterior, 0.95));
      const Point3 target(sx * (9.0 + 2.0 * (k % 3)), 18.0 + 4.0 * (k / 3), 8.0);
      const Vector3 d = (target - skin).normalized();
      plans.push_back({id++, side, TrajectoryPlan(skin, skin + kBoneDepth * d, target)});
    }
  }
  return plans;
}

}  // namespace detail

/**
 * Builds the synthetic head: ~cfg.surface_points surface samples with
 * analytic normals (jittered Fibonacci directions cast from the origin), the six
 * named landmarks, twelve trajectory plans (six per side) and a
 * seed-dependent model-to-world pose.
 */
inline Phantom generate_phantom(const SimConfig& cfg) {
  cfg.validate();
  Phantom ph;
  const HeadShape& shape = ph.shape;

  const std::size_t n = cfg.surface_points;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  // Jitter of about half the sample spacing breaks the near-symmetries of the
  // Fibonacci lattice, which otherwise make rotated copies of the vertex set
  // line up with itself and trap point-to-point ICP.
  const double jitter = 0.5 * std::sqrt(4.0 * kPi / static_cast<double>(n));
  Rng jitter_rng(cfg.seed, RngStream::Surface);
  ph.surface.points.reserve(n);
  ph.surface.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * static_cast<double>(i);
    const Vector3 u(r * std::cos(phi), r * std::sin(phi), z);
    const Point3 p = shape.surface_along(u + jitter_rng.normal3(jitter));
    ph.surface.points.push_back(p);
    ph.surface.normals.push_back(shape.normal(p));
  }

  const std::array<Vector3, 6> landmark_rays{
      Vector3(1.0, 0.15, -0.35),  Vector3(-1.0, 0.15, -0.35),  // intertragal notches
      Vector3(0.42, 1.0, -0.02),  Vector3(-0.42, 1.0, -0.02),  // lateral canthi
      Vector3(0.15, 1.0, -0.05),  Vector3(-0.15, 1.0, -0.05),  // medial canthi
  };
  for (std::size_t i = 0; i < landmark_rays.size(); ++i) {
    ph.landmarks.labels.push_back(canonical_landmark_labels()[i]);
    ph.landmarks.positions.push_back(shape.surface_along(landmark_rays[i]));
  }

  ph.plans = detail::make_plans(shape);

  Rng rng(cfg.seed, RngStream::Pose);
  const UnitVector3 axis = rng.unit_vector();
  const double angle = rng.uniform(10.0, 40.0);
  const Vector3 t(rng.uniform(-150.0, 150.0), rng.uniform(-150.0, 150.0), rng.uniform(250.0, 450.0));
  ph.true_pose = RigidTransform::from_axis_angle(axis.vec(), angle, t);
  return ph;
}

// Angular extent of the traced forehead patch, seen from the model origin.
inline constexpr double kPatchAzimuthDeg = 40.0;
inline constexpr double kPatchElevationMinDeg = -20.0;
inline constexpr double kPatchElevationMaxDeg = 38.0;

// Model vertices inside the traced forehead patch (the region the simulated
// stylus path covers), in model-index order.
inline std::vector<Point3> surface_patch(const Phantom& ph) {
  std::vector<Point3> out;
  for (const auto& p : ph.surface.points) {
    const double az = rad_to_deg(std::atan2(p.x(), p.y()));
    const double el = rad_to_deg(std::atan2(p.z(), std::hypot(p.x(), p.y())));
    if (std::abs(az) <= kPatchAzimuthDeg && el >= kPatchElevationMinDeg && el <= kPatchElevationMaxDeg) out.push_back(p);
  }
  return out;
}

// Landmarks as digitised on the patient: true positions mapped to the world
// frame plus isotropic noise.
inline LandmarkSet simulate_landmarks(const Phantom& ph, const SimConfig& cfg) {
  Rng rng(cfg.seed, RngStream::Landmarks);
  LandmarkSet out;
  out.labels = ph.landmarks.labels;
  for (const auto& p : ph.landmarks.positions) {
    const Vector3 noise = rng.normal3(cfg.landmark_noise_sigma);
    out.positions.push_back(ph.true_pose.apply(p + noise));
  }
  return out;
}

enum class TraceSampleKind { Surface, LiftoffRamp, LiftoffAirborne };

struct TraceSample {
  double t = 0.0;  // seconds
  Point3 p;        // world frame
  TraceSampleKind kind = TraceSampleKind::Surface;
};

namespace detail {

// Dense boustrophedon path over the forehead and brow patch, resampled to
// `spacing` mm of arc length. Rows run left-right at fixed elevation seen
// from the origin.
inline std::vector<Point3> forehead_path(const HeadShape& shape, double spacing) {
  constexpr double az_max = kPatchAzimuthDeg;
  constexpr double el_min = kPatchElevationMinDeg, el_max = kPatchElevationMaxDeg;
  constexpr int rows = 11;
  const auto ray = [](double az_deg, double el_deg) {
    const double az = deg_to_rad(az_deg), el = deg_to_rad(el_deg);
    return Vector3(std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el));
  };

  std::vector<Point3> dense;
  constexpr double fine = 0.05;  // degrees per dense step
  for (int row = 0; row < rows; ++row) {
    const double el = el_min + (el_max - el_min) * row / (rows - 1);
    const bool forward = row % 2 == 0;
    for (double s = 0.0; s <= 2.0 * az_max + 1e-9; s += fine) {
      const double az = forward ? -az_max + s : az_max - s;
      dense.push_back(shape.surface_along(ray(az, el)));
    }
    if (row + 1 < rows) {
      const double next = el_min + (el_max - el_min) * (row + 1) / (rows - 1);
      const double az = forward ? az_max : -az_max;
      for (double e = el + fine; e < next; e += fine) dense.push_back(shape.surface_along(ray(az, e)));
    }
  }

  std::vector<Point3> out{dense.front()};
  double carried = 0.0;
  for (std::size_t i = 1; i < dense.size(); ++i) {
    carried += (dense[i] - dense[i - 1]).norm();
    if (carried >= spacing) {
      out.push_back(dense[i]);
      carried = 0.0;
    }
  }
  return out;
}

}  // namespace detail

/**
 * Simulated stylus trace over the designated forehead patch, in the world
 * frame.
 *
 * The path is snapped to the nearest dense-model vertex at each sample (the
 * stylus touches the same surface the model samples), then perturbed by
 * isotropic noise. `liftoff_count` excursions interrupt the path: a
 * near-vertical rise along the surface normal to `liftoff_height`, travel at
 * that height, and a descent further along the path.
 */
inline std::vector<TraceSample> simulate_trace(const Phantom& ph, const SimConfig& cfg) {
  cfg.validate();
  const auto path = detail::forehead_path(ph.shape, cfg.sample_spacing);
  const NeighborIndex index(ph.surface);

  std::vector<Point3> snapped;
  snapped.reserve(path.size());
  for (const auto& p : path) snapped.push_back(ph.surface.points[index.nearest(p).index]);

  struct Raw {
    Point3 p;
    TraceSampleKind kind;
  };
  std::vector<Raw> raw;

  Rng lift_rng(cfg.seed, RngStream::Liftoff);
  const std::size_t n = snapped.size();
  const auto travel_samples = static_cast<std::size_t>(std::ceil(25.0 / cfg.sample_spacing));
  std::vector<std::size_t> starts;
  for (int k = 0; k < cfg.liftoff_count; ++k) {
    const double frac = (k + 1.0) / (cfg.liftoff_count + 1.0) + lift_rng.uniform(-0.03, 0.03);
    starts.push_back(static_cast<std::size_t>(frac * static_cast<double>(n)));
  }

  // 0.9 mm steps keep ramp heights off the 10 mm gate and removal radius.
  const double rise_step = 0.9;
  std::size_t i = 0;
  std::size_t next_lift = 0;
  while (i < n) {
    if (next_lift < starts.size() && i >= starts[next_lift] && i + travel_samples < n) {
      const std::size_t end = i + travel_samples;
      const Vector3 up0 = ph.shape.normal(snapped[i]).vec();
      for (double h = rise_step; h < cfg.liftoff_height; h += rise_step) {
        raw.push_back({snapped[i] + h * up0, TraceSampleKind::LiftoffRamp});
      }
      for (std::size_t j = i; j <= end; ++j) {
        const Vector3 up = ph.shape.normal(snapped[j]).vec();
        raw.push_back({snapped[j] + cfg.liftoff_height * up, TraceSampleKind::LiftoffAirborne});
      }
      const Vector3 up1 = ph.shape.normal(snapped[end]).vec();
      for (double h = cfg.liftoff_height - rise_step; h > 0.0; h -= rise_step) {
        raw.push_back({snapped[end] + h * up1, TraceSampleKind::LiftoffRamp});
      }
      i = end;
      ++next_lift;
      continue;
    }
    raw.push_back({snapped[i], TraceSampleKind::Surface});
    ++i;
  }

  Rng noise(cfg.seed, RngStream::TraceNoise);
  std::vector<TraceSample> out;
  out.reserve(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const Point3 local = raw[j].p + noise.normal3(cfg.trace_noise_sigma);
    out.push_back({static_cast<double>(j) / cfg.sample_rate_hz, ph.true_pose.apply(local), raw[j].kind});
  }
  return out;
}

// Deviation of an executed insertion from its plan.
struct InsertionPerturbation {
  Vector3 lateral = Vector3::Zero();     // entry shift, orthogonal to the plan direction
  double tilt_deg = 0.0;                 // rotation about `tilt_axis` at the entry
  Vector3 tilt_axis = Vector3::UnitX();  // orthogonal to the plan direction
  double depth_mm = 0.0;                 // along-plan overshoot, positive = too deep
};

struct SimulatedInsertion {
  std::vector<Point3> rod_samples;  // outside end first, tip last
  PlacementResult result;
};

/**
 * Places a straight rod for `plan` under `perturbation`: the entry moves
 * laterally, the direction tilts about the entry, and the tip sits where its
 * projection on the plan is `depth_mm` past the target. The placement is
 * recovered from 40 rod samples exactly as for imaged rods.
 */
inline SimulatedInsertion simulate_insertion(const TrajectoryPlan& plan, const InsertionPerturbation& perturbation) {
  constexpr double kRodLength = 150.0;
  constexpr int kSamples = 40;
  const Vector3& d = plan.direction().vec();
  const Point3 entry = plan.bone_entry() + perturbation.lateral - perturbation.lateral.dot(d) * d;
  Vector3 axis = perturbation.tilt_axis - perturbation.tilt_axis.dot(d) * d;
  if (axis.norm() < 1e-12) axis = d.unitOrthogonal();
  const Vector3 u = Eigen::AngleAxisd(deg_to_rad(perturbation.tilt_deg), axis.normalized()) * d;
  const double s_tip = (perturbation.depth_mm + (plan.target() - entry).dot(d)) / u.dot(d);
  const Point3 tip = entry + s_tip * u;

  SimulatedInsertion out;
  for (int k = kSamples - 1; k >= 0; --k) {
    out.rod_samples.push_back(tip - (kRodLength * k / (kSamples - 1)) * u);
  }
  out.result = placement_from_rod(plan, out.rod_samples);
  return out;
}

inline InsertionPerturbation sample_perturbation(const TrajectoryPlan& plan, double entry_sigma,
                                                 double angle_sigma, double depth_sigma, Rng& rng) {
  const Vector3& d = plan.direction().vec();
  const Vector3 e1 = d.unitOrthogonal();
  const Vector3 e2 = d.cross(e1);
  InsertionPerturbation p;
  p.lateral = rng.normal(entry_sigma) * e1 + rng.normal(entry_sigma) * e2;
  const double axis_angle = rng.uniform(0.0, 2.0 * kPi);
  p.tilt_axis = std::cos(axis_angle) * e1 + std::sin(axis_angle) * e2;
  p.tilt_deg = rng.normal(angle_sigma);
  p.depth_mm = rng.normal(depth_sigma);
  return p;
}

inline SimulatedInsertion simulate_insertion(const TrajectoryPlan& plan, const SimConfig& cfg, Rng& rng,
                                             double sigma_scale = 1.0) {
  return simulate_insertion(plan, sample_perturbation(plan, sigma_scale * cfg.insertion_entry_sigma,
                                                      sigma_scale * cfg.insertion_angle_sigma,
                                                      sigma_scale * cfg.insertion_depth_sigma, rng));
}

struct SimulatedTrial {
  int plan_id = 0;
  Condition condition = Condition::ToolTracking;
  std::string user;
  SimulatedInsertion insertion;
  double marking_time = 0.0;    // s
  double insertion_time = 0.0;  // s
};

// Study-shaped placement set: every user performs `trials_per_condition`
// insertions per condition, cycling through the plans; in-situ trials use
// sigmas scaled by `in_situ_sigma_scale`.
inline std::vector<SimulatedTrial> simulate_trials(const Phantom& ph, const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, RngStream::Insertion);
  Rng timing(cfg.seed, RngStream::Timing);
  std::vector<SimulatedTrial> out;
  for (int u = 0; u < cfg.users; ++u) {
    const std::string user = "user" + std::to_string(u + 1);
    for (Condition c : {Condition::ToolTracking, Condition::InSitu}) {
      const double scale = c == Condition::InSitu ? cfg.in_situ_sigma_scale : 1.0;
      for (int k = 0; k < cfg.trials_per_condition; ++k) {
        const auto& plan = ph.plans[static_cast<std::size_t>((k + (u % 2) * 6) % static_cast<int>(ph.plans.size()))];
        SimulatedTrial trial{plan.id, c, user, simulate_insertion(plan.plan, cfg, rng, scale)};
        const double insert_s = c == Condition::InSitu ? cfg.insertion_time_in_situ_s : cfg.insertion_time_tool_s;
        trial.marking_time = cfg.marking_time_s * std::exp(timing.normal(cfg.time_log_sigma));
        trial.insertion_time = insert_s * std::exp(timing.normal(cfg.time_log_sigma));
        out.push_back(std::move(trial));
      }
    }
  }
  return out;
}

}  // namespace tracenav

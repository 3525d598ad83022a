#include <gtest/gtest.h>

#include "tracenav/phantom.hpp"
#include "tracenav/rigid_fit.hpp"

using namespace tracenav;

namespace {

const Phantom& reference() {
  static const Phantom ph = generate_phantom(SimConfig{});
  return ph;
}

const NeighborIndex& reference_index() {
  static const NeighborIndex index(reference().surface);
  return index;
}

}  // namespace

TEST(Phantom, DeterministicForFixedSeed) {
  SimConfig cfg;
  cfg.surface_points = 5000;
  const auto a = generate_phantom(cfg);
  const auto b = generate_phantom(cfg);
  EXPECT_EQ(a.surface.points, b.surface.points);
  EXPECT_EQ(a.true_pose.matrix(), b.true_pose.matrix());
  EXPECT_EQ(a.landmarks.positions, b.landmarks.positions);
  cfg.seed = 7;
  EXPECT_NE(generate_phantom(cfg).true_pose.matrix(), a.true_pose.matrix());
}

TEST(Phantom, SizeAndBoundingBox) {
  const auto& ph = reference();
  EXPECT_EQ(ph.surface.size(), 100000u);
  ASSERT_TRUE(ph.surface.has_normals());
  Vector3 lo = Vector3::Constant(1e9), hi = Vector3::Constant(-1e9);
  for (const auto& p : ph.surface.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vector3 extent = hi - lo;
  EXPECT_LE(extent.x(), 250.0);
  EXPECT_LE(extent.y(), 250.0);
  EXPECT_LE(extent.z(), 150.0);
  EXPECT_GT(extent.minCoeff(), 100.0);
}

TEST(Phantom, NormalsMatchImplicitGradient) {
  const auto& ph = reference();
  for (std::size_t i = 0; i < ph.surface.size(); ++i) {
    const Point3& p = ph.surface.points[i];
    const Vector3 g = ph.shape.gradient(p);
    ASSERT_LT(std::abs(g.dot(ph.surface.normals[i].vec()) - g.norm()), 1e-6) << i;
    ASSERT_LT(std::abs(ph.shape.value(p)), 1e-9) << i;
    ASSERT_GT(p.dot(ph.surface.normals[i].vec()), 0.0) << i;  // outward
  }
}

TEST(Phantom, LandmarksAndPlansOnSurfaceTargetsInterior) {
  const auto& ph = reference();
  ASSERT_EQ(ph.landmarks.positions.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(ph.landmarks.labels[i], canonical_landmark_labels()[i]);
    EXPECT_LT(ph.shape.distance_estimate(ph.landmarks.positions[i]), 0.1);
  }
  ASSERT_EQ(ph.plans.size(), 12u);
  int left = 0;
  for (std::size_t i = 0; i < ph.plans.size(); ++i) {
    const auto& np = ph.plans[i];
    EXPECT_EQ(np.id, static_cast<int>(i));
    left += np.side == "left";
    EXPECT_LT(ph.shape.distance_estimate(np.plan.skin_entry()), 0.5);
    EXPECT_LT(ph.shape.value(np.plan.target()), 0.0);
    EXPECT_LT(ph.shape.value(np.plan.bone_entry()), 0.0);
  }
  EXPECT_EQ(left, 6);
}

TEST(Phantom, NoiselessLandmarksRoundTrip) {
  SimConfig cfg;
  cfg.landmark_noise_sigma = 0.0;
  const auto& ph = reference();
  const auto world = simulate_landmarks(ph, cfg);
  const auto reg = register_landmarks(world, ph.landmarks);
  const auto err = pose_error(reg.transform, ph.true_pose.inverse());
  EXPECT_LT(err.translation_mm, 1e-6);
  EXPECT_LT(err.rotation_deg, 1e-6);
  EXPECT_LT(reg.fre, 1e-6);
}

TEST(Phantom, SeedFortyTwoLandmarkSeedWithinBasin) {
  const auto& ph = reference();
  const auto reg = register_landmarks(simulate_landmarks(ph, SimConfig{}), ph.landmarks);
  const auto err = pose_error(reg.transform, ph.true_pose.inverse());
  EXPECT_LT(err.translation_mm, 10.0);
  EXPECT_LT(err.rotation_deg, 10.0);
}

TEST(SimulateTrace, NoiselessWithoutLiftoffsOnSurface) {
  SimConfig cfg;
  cfg.trace_noise_sigma = 0.0;
  cfg.liftoff_count = 0;
  const auto& ph = reference();
  const auto trace = simulate_trace(ph, cfg);
  ASSERT_GE(trace.size(), 300u);
  const auto to_model = ph.true_pose.inverse();
  for (const auto& s : trace) {
    EXPECT_EQ(s.kind, TraceSampleKind::Surface);
    ASSERT_LT(reference_index().nearest(to_model.apply(s.p)).distance, 1e-9);
  }
}

TEST(SimulateTrace, DefaultStreamShape) {
  const auto& ph = reference();
  const auto trace = simulate_trace(ph, SimConfig{});
  const auto to_model = ph.true_pose.inverse();
  std::size_t surface = 0, airborne = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i > 0) {
      EXPECT_GT(trace[i].t, trace[i - 1].t);
    }
    const Point3 q = to_model.apply(trace[i].p);
    if (trace[i].kind == TraceSampleKind::Surface) {
      ++surface;
      EXPECT_LT(reference_index().nearest(q).distance, 2.0);
    } else if (trace[i].kind == TraceSampleKind::LiftoffAirborne) {
      ++airborne;
      EXPECT_GT(reference_index().nearest(q).distance, 10.0);
      EXPECT_GT(ph.shape.value(q), 0.0);
    }
  }
  EXPECT_GE(surface, 300u);
  EXPECT_GT(airborne, 0u);
}

TEST(SimulateTrace, EachLiftoffRisesAboveHeight) {
  const auto& ph = reference();
  SimConfig cfg;
  cfg.trace_noise_sigma = 0.0;
  const auto trace = simulate_trace(ph, cfg);
  const auto to_model = ph.true_pose.inverse();
  int excursions = 0;
  double peak = 0.0;
  bool in_air = false;
  for (const auto& s : trace) {
    const bool lifted = s.kind != TraceSampleKind::Surface;
    if (lifted) peak = std::max(peak, reference_index().nearest(to_model.apply(s.p)).distance);
    if (in_air && !lifted) {
      ++excursions;
      EXPECT_GE(peak, cfg.liftoff_height - 1.0);
      peak = 0.0;
    }
    in_air = lifted;
  }
  EXPECT_EQ(excursions, cfg.liftoff_count);
}

TEST(SimulateTrace, Deterministic) {
  const auto& ph = reference();
  const auto a = simulate_trace(ph, SimConfig{});
  const auto b = simulate_trace(ph, SimConfig{});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].p, b[i].p);
    EXPECT_EQ(a[i].t, b[i].t);
  }
}

TEST(SimulateInsertion, ZeroSigmasGiveZeroMetrics) {
  SimConfig cfg;
  cfg.insertion_entry_sigma = cfg.insertion_angle_sigma = cfg.insertion_depth_sigma = 0.0;
  Rng rng(cfg.seed, RngStream::Insertion);
  for (const auto& np : reference().plans) {
    const auto sim = simulate_insertion(np.plan, cfg, rng);
    EXPECT_GE(sim.rod_samples.size(), 30u);
    const auto m = placement_metrics(np.plan, sim.result);
    EXPECT_NEAR(m.entry_offset, 0.0, 1e-9);
    EXPECT_NEAR(m.angular_deviation, 0.0, 1e-6);
    EXPECT_NEAR(m.target_tip_error, 0.0, 1e-9);
  }
}

TEST(SimulateInsertion, RodSamplesCollinearTipLast) {
  SimConfig cfg;
  Rng rng(cfg.seed, RngStream::Insertion);
  const auto& plan = reference().plans[3].plan;
  const auto sim = simulate_insertion(plan, cfg, rng);
  for (const auto& p : sim.rod_samples) EXPECT_LT(sim.result.fitted_line.distance_to(p), 1e-9);
  EXPECT_LT((sim.result.tip - sim.rod_samples.back()).norm(), 1e-9);
}

TEST(SimulateTrials, StudyShape) {
  SimConfig cfg;
  const auto trials = simulate_trials(reference(), cfg);
  ASSERT_EQ(trials.size(), static_cast<std::size_t>(cfg.users * 2 * cfg.trials_per_condition));
  for (const auto& t : trials) {
    EXPECT_GT(t.marking_time, 0.0);
    EXPECT_GT(t.insertion_time, 0.0);
    EXPECT_GE(t.plan_id, 0);
    EXPECT_LT(t.plan_id, 12);
  }
  const auto again = simulate_trials(reference(), cfg);
  EXPECT_EQ(again.back().insertion.rod_samples, trials.back().insertion.rod_samples);
}

TEST(SurfacePatch, InsideForeheadWindow) {
  const auto patch = surface_patch(reference());
  EXPECT_GT(patch.size(), 1000u);
  for (const auto& p : patch) {
    EXPECT_GT(p.y(), 0.0);
    EXPECT_LE(std::abs(rad_to_deg(std::atan2(p.x(), p.y()))), kPatchAzimuthDeg);
  }
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.liftoff_height = 10.0;
  EXPECT_THROW(cfg.validate(), InputError);
  cfg = {};
  cfg.trace_noise_sigma = -1.0;
  EXPECT_THROW(generate_phantom(cfg), InputError);
  cfg = {};
  cfg.users = 0;
  EXPECT_THROW(cfg.validate(), InputError);
}

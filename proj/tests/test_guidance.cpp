#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tracenav/guidance.hpp"

using namespace tracenav;

namespace {

struct Case {
  TrajectoryPlan plan;
  ToolPose pose;
};

// Random plan and a pose within 60 degrees of it, near the entry.
Case random_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> len(30.0, 100.0), tilt(0.0, 60.0);
  const Point3 skin = oracle::random_vector(rng, 100.0);
  const Vector3 d = oracle::random_vector(rng, 1.0).normalized();
  const double l = len(rng);
  const TrajectoryPlan plan(skin, skin + 0.08 * l * d, skin + l * d);
  Vector3 axis = d.cross(oracle::random_vector(rng, 1.0)).normalized();
  const Vector3 u = Eigen::AngleAxisd(deg_to_rad(tilt(rng)), axis) * d;
  return {plan, {skin + oracle::random_vector(rng, 20.0), UnitVector3(u)}};
}

const TrajectoryPlan kAxial({0, 0, 0}, {0, 0, 6}, {0, 0, 70});

}  // namespace

TEST(LinePlane, AxisAlignedHit) {
  const Line3 line{{0, 0, 0}, UnitVector3(0, 0, 1)};
  EXPECT_EQ(line_plane_intersection(line, {3, -2, 5}, UnitVector3(0, 0, 1)), Point3(0, 0, 5));
}

TEST(LinePlane, ParallelThrows) {
  const Line3 line{{0, 0, 0}, UnitVector3(1, 0, 0)};
  EXPECT_THROW(line_plane_intersection(line, {0, 0, 5}, UnitVector3(0, 0, 1)), NoIntersection);
  EXPECT_THROW(line_plane_intersection(line, {0, 0, 5}, UnitVector3(0, 0, 1)), DegenerateInput);
}

TEST(LinePlane, RandomObliqueSatisfiesBothEquations) {
  std::mt19937_64 rng(50);
  for (int i = 0; i < 1000; ++i) {
    const Line3 line{oracle::random_vector(rng, 50.0), UnitVector3(oracle::random_vector(rng, 1.0))};
    const UnitVector3 n(oracle::random_vector(rng, 1.0));
    if (std::abs(line.direction.dot(n.vec())) < 0.1) continue;
    const Point3 q = oracle::random_vector(rng, 50.0);
    const Point3 x = line_plane_intersection(line, q, n);
    EXPECT_LT(std::abs((x - q).dot(n.vec())), 1e-9);
    EXPECT_LT(line.distance_to(x), 1e-9);
  }
}

TEST(GuidanceFrame, CollinearAtSkinEntry) {
  const auto f = guidance_frame(kAxial, {{0, 0, 0}, UnitVector3(0, 0, 1)});
  EXPECT_TRUE(f.offsets_valid);
  EXPECT_EQ(f.entry_offset, 0.0);
  EXPECT_EQ(f.target_offset, 0.0);
  EXPECT_EQ(f.depth_to_target, 70.0);
  EXPECT_EQ(f.angular_error, 0.0);
  EXPECT_EQ(f.entry_correction, Vector3::Zero());
  EXPECT_TRUE(f.on_trajectory);
}

TEST(GuidanceFrame, ParallelLateralOffset) {
  const auto f = guidance_frame(kAxial, {{3, 0, -10}, UnitVector3(0, 0, 1)});
  EXPECT_NEAR(f.entry_offset, 3.0, 1e-12);
  EXPECT_NEAR(f.target_offset, 3.0, 1e-12);
  EXPECT_LT((f.entry_correction - Vector3(-1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((f.entry_intersection - Point3(3, 0, 0)).norm(), 1e-12);
  EXPECT_LT((f.target_intersection - Point3(3, 0, 70)).norm(), 1e-12);
  EXPECT_FALSE(f.on_trajectory);
}

TEST(GuidanceFrame, OvershootIsNegativeDepth) {
  const auto f = guidance_frame(kAxial, {{0, 0, 72}, UnitVector3(0, 0, 1)});
  EXPECT_NEAR(f.depth_to_target, -2.0, 1e-12);
  EXPECT_EQ(f.entry_offset, 0.0);
}

TEST(GuidanceFrame, InsertionModeUsesBoneEntryPlane) {
  // Tilted tool: intersections differ between the skin and bone planes.
  const ToolPose pose{{0, 0, 0}, UnitVector3(Eigen::AngleAxisd(deg_to_rad(10.0), Vector3::UnitY()) * Vector3::UnitZ())};
  const auto marking = guidance_frame(kAxial, pose, GuidanceMode::Marking);
  const auto insertion = guidance_frame(kAxial, pose, GuidanceMode::Insertion);
  EXPECT_NEAR(marking.entry_offset, 0.0, 1e-12);
  EXPECT_NEAR(insertion.entry_offset, 6.0 * std::tan(deg_to_rad(10.0)), 1e-12);
  EXPECT_NEAR(insertion.entry_intersection.z(), 6.0, 1e-12);
  EXPECT_EQ(marking.target_offset, insertion.target_offset);
}

TEST(GuidanceFrame, NearOrthogonalPoseFlagsOffsetsInvalid) {
  const ToolPose pose{{5, 0, 10}, UnitVector3(Eigen::AngleAxisd(deg_to_rad(89.5), Vector3::UnitY()) * Vector3::UnitZ())};
  const auto f = guidance_frame(kAxial, pose);
  EXPECT_FALSE(f.offsets_valid);
  EXPECT_TRUE(std::isnan(f.entry_offset));
  EXPECT_TRUE(std::isnan(f.target_offset));
  EXPECT_NEAR(f.angular_error, 89.5, 1e-9);
  EXPECT_NEAR(f.depth_to_target, 60.0, 1e-12);
  EXPECT_FALSE(f.on_trajectory);
  // Anti-parallel tools are flagged by the folded tilt, not the raw angle.
  const auto back = guidance_frame(kAxial, {{0, 0, 0}, UnitVector3(0, 0, -1)});
  EXPECT_TRUE(back.offsets_valid);
  EXPECT_NEAR(back.angular_error, 180.0, 1e-12);
}

TEST(GuidanceFrame, RejectsNonFiniteTip) {
  EXPECT_THROW(guidance_frame(kAxial, {{NAN, 0, 0}, UnitVector3(0, 0, 1)}), InputError);
}

TEST(GuidanceFrame, MatchesIndependentProjection) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_case(rng);
    for (const auto mode : {GuidanceMode::Marking, GuidanceMode::Insertion}) {
      const Point3& entry = mode == GuidanceMode::Marking ? c.plan.skin_entry() : c.plan.bone_entry();
      const auto f = guidance_frame(c.plan, c.pose, mode);
      const auto o = oracle::guidance(entry, c.plan.target(), c.plan.target() - c.plan.skin_entry(), c.pose.tip,
                                      c.pose.direction.vec());
      ASSERT_TRUE(f.offsets_valid);
      EXPECT_NEAR(f.entry_offset, o.entry_offset, 1e-9);
      EXPECT_NEAR(f.target_offset, o.target_offset, 1e-9);
      EXPECT_LT((f.entry_correction - o.correction).norm(), 1e-9);
      EXPECT_NEAR(f.depth_to_target, o.depth, 1e-9);
      EXPECT_NEAR(f.angular_error, o.angle_deg, 1e-9);
      EXPECT_EQ(f.on_trajectory, o.entry_offset <= 2.0 && o.angle_deg <= 2.0);
    }
  }
}

TEST(GuidanceFrame, RigidEquivariance) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_case(rng);
    const RigidTransform g(oracle::random_rotation(rng), oracle::random_vector(rng, 500.0));
    const auto a = guidance_frame(c.plan, c.pose);
    const auto b = guidance_frame(c.plan.transformed(g), {g.apply(c.pose.tip), g.rotate(c.pose.direction)});
    EXPECT_NEAR(a.entry_offset, b.entry_offset, 1e-9);
    EXPECT_NEAR(a.target_offset, b.target_offset, 1e-9);
    EXPECT_NEAR(a.depth_to_target, b.depth_to_target, 1e-9);
    EXPECT_NEAR(a.angular_error, b.angular_error, 1e-9);
    EXPECT_LT((g.rotate(a.entry_correction) - b.entry_correction).norm(), 1e-9);
  }
}

TEST(GuidanceFrame, CorrectionInPlaneAndReducesOffset) {
  std::mt19937_64 rng(53);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_case(rng);
    const auto f = guidance_frame(c.plan, c.pose);
    if (f.entry_offset < 1e-6) continue;
    const Vector3& d = c.plan.direction().vec();
    EXPECT_LT(std::abs(f.entry_correction.dot(d)), 1e-9);
    EXPECT_NEAR(f.entry_correction.norm(), 1.0, 1e-12);
    // Sliding the tool sideways along the correction moves its intersection.
    for (double frac : {0.1, 0.5, 0.9}) {
      const double step = frac * f.entry_offset;
      const auto moved = guidance_frame(c.plan, {c.pose.tip + step * f.entry_correction, c.pose.direction});
      EXPECT_LT(moved.entry_offset, f.entry_offset);
      EXPECT_NEAR(moved.entry_offset, f.entry_offset - step, 1e-9);
    }
  }
}

TEST(GuidanceFrame, OnLineDepthDecreasesWithUnitSlope) {
  std::mt19937_64 rng(54);
  for (int i = 0; i < 50; ++i) {
    const auto c = random_case(rng);
    const Line3 line = c.plan.line();
    double prev = guidance_frame(c.plan, {line.at(-5.0), c.plan.direction()}).depth_to_target;
    for (double s = -4.0; s <= 120.0; s += 1.0) {
      const auto f = guidance_frame(c.plan, {line.at(s), c.plan.direction()});
      EXPECT_NEAR(f.entry_offset, 0.0, 1e-9);
      EXPECT_NEAR(f.target_offset, 0.0, 1e-9);
      EXPECT_NEAR(f.angular_error, 0.0, 1e-9);
      EXPECT_NEAR(f.depth_to_target - prev, -1.0, 1e-9);
      prev = f.depth_to_target;
    }
  }
}

TEST(GuidanceFrame, OnTrajectoryThresholdsConfigurable) {
  const ToolPose pose{{1.5, 0, 0}, UnitVector3(0, 0, 1)};
  EXPECT_TRUE(guidance_frame(kAxial, pose).on_trajectory);
  GuidanceConfig tight;
  tight.on_trajectory_offset_mm = 1.0;
  EXPECT_FALSE(guidance_frame(kAxial, pose, GuidanceMode::Marking, tight).on_trajectory);
}

TEST(InSituOverlay, AxialExample) {
  const TrajectoryPlan plan({0, 0, 0}, {0, 0, 5}, {0, 0, 70});
  const auto o = in_situ_overlay(plan);
  EXPECT_EQ(o.trajectory.start, Point3(0, 0, 70));
  EXPECT_EQ(o.trajectory.end, Point3(0, 0, -100));
  EXPECT_EQ(o.trajectory.diameter_mm, 1.0);
  EXPECT_EQ(o.entry_disc.center, Point3(0, 0, 0));
  EXPECT_EQ(o.entry_disc.normal.vec(), Vector3(0, 0, 1));
  EXPECT_EQ(o.entry_disc.diameter_mm, 6.0);
  EXPECT_EQ(o.target.center, Point3(0, 0, 70));
  EXPECT_EQ(o.target.diameter_mm, 4.0);
}

TEST(InSituOverlay, CylinderCollinearWithPlan) {
  std::mt19937_64 rng(55);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_case(rng);
    const auto o = in_situ_overlay(c.plan);
    const Line3 line = c.plan.line();
    EXPECT_LT(line.distance_to(o.trajectory.start), 1e-9);
    EXPECT_LT(line.distance_to(o.trajectory.end), 1e-9);
    EXPECT_NEAR((o.trajectory.end - c.plan.skin_entry()).norm(), 100.0, 1e-9);
  }
}

TEST(TrajectoryPlan, Validation) {
  EXPECT_THROW(TrajectoryPlan({0, 0, 0}, {0, 0, 0}, {0, 0, 0}), DegenerateInput);
  EXPECT_THROW(TrajectoryPlan({0, 0, 0}, {1, 0, 5}, {0, 0, 70}), InputError);  // 1 mm off the line
  EXPECT_THROW(TrajectoryPlan({0, 0, 0}, {0, 0, 71}, {0, 0, 70}), InputError);  // past the target
  EXPECT_THROW(TrajectoryPlan({0, 0, NAN}, {0, 0, 5}, {0, 0, 70}), InputError);
  EXPECT_NO_THROW(TrajectoryPlan({0, 0, 0}, {0.3, 0, 5}, {0, 0, 70}));
  EXPECT_NO_THROW(TrajectoryPlan({0, 0, 0}, {0, 0, -0.4}, {0, 0, 70}));
  EXPECT_EQ(kAxial.direction().vec(), Vector3(0, 0, 1));
}

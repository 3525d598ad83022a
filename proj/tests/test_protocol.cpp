#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tracenav/protocol.hpp"

using namespace tracenav;
using protocol::json;

namespace {

std::vector<NamedPlan> model_plans() {
  return {{0, "left", TrajectoryPlan(Point3(0, 0, 50), Point3(0, 0, 45), Point3(0, 0, 10))},
          {5, "right", TrajectoryPlan(Point3(30, 0, 40), Point3(28, 0, 36), Point3(10, 0, 0))}};
}

const RigidTransform& registration() {
  static const RigidTransform t(Eigen::AngleAxisd(0.4, Vector3(0.2, -1, 0.5).normalized()).toRotationMatrix(),
                                Vector3(12, -30, 7));
  return t;
}

const protocol::GuidanceService& service() {
  static const protocol::GuidanceService s(model_plans(), registration());
  return s;
}

json pose_msg(const Point3& tip, const Vector3& dir) {
  return {{"kind", "pose"}, {"tip", {tip.x(), tip.y(), tip.z()}}, {"direction", {dir.x(), dir.y(), dir.z()}}};
}

}  // namespace

TEST(Protocol, GreetingIsPlanThenOverlay) {
  const auto s = service().open_session();
  const auto g = service().greeting(s);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].at("kind"), "plan");
  EXPECT_EQ(g[0].at("plan_id"), 0);
  EXPECT_EQ(g[0].at("mode"), "marking");
  EXPECT_EQ(g[0].at("plan_ids"), json({0, 5}));
  EXPECT_EQ(g[1].at("kind"), "overlay");
  for (const char* key : {"entry_disc", "trajectory_cylinder", "target_sphere"}) EXPECT_TRUE(g[1].contains(key)) << key;
}

TEST(Protocol, PlansAreHeldInPatientFrame) {
  const auto& p = service().plans()[1];
  const auto expected = model_plans()[1].plan.transformed(registration());
  EXPECT_LT((p.plan.target() - expected.target()).norm(), 1e-12);
  const auto g = service().greeting(service().open_session());
  const Point3 sent = io::parse_point(g[0].at("plan").at("target"), "target");
  EXPECT_LT((sent - service().plans()[0].plan.target()).norm(), 1e-12);
}

TEST(Protocol, PoseOnTheLineIsOnTrajectory) {
  auto s = service().open_session();
  const auto& plan = service().plans()[0].plan;
  const Point3 tip = plan.skin_entry() - 20.0 * plan.direction().vec();
  json msg = pose_msg(tip, plan.direction().vec());
  msg["seq"] = 17;
  const auto out = service().handle_line(s, msg.dump());
  ASSERT_EQ(out.size(), 1u);
  const json& f = out[0];
  EXPECT_EQ(f.at("kind"), "frame");
  EXPECT_EQ(f.at("seq"), 17);
  EXPECT_EQ(f.at("plan_id"), 0);
  EXPECT_TRUE(f.at("on_trajectory").get<bool>());
  EXPECT_NEAR(f.at("entry_offset").get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(f.at("target_offset").get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(f.at("angular_error").get<double>(), 0.0, 1e-6);
}

TEST(Protocol, ScriptMatchesDirectFramesInOrder) {
  std::mt19937_64 rng(99);
  auto s = service().open_session();
  std::string text;
  std::vector<json> expected;
  for (int i = 0; i < 1000; ++i) {
    const auto& np = service().plans()[static_cast<std::size_t>(i % 2)];
    const GuidanceMode mode = i % 3 == 0 ? GuidanceMode::Insertion : GuidanceMode::Marking;
    const Point3 tip = np.plan.skin_entry() + oracle::random_vector(rng, 5.0);
    const Vector3 dir = (np.plan.direction().vec() + oracle::random_vector(rng, 0.2)).normalized();
    json msg = pose_msg(tip, dir);
    msg["plan_id"] = np.id;
    msg["mode"] = to_string(mode);
    msg["seq"] = i;
    text += msg.dump() + "\n";
    // The wire form goes through JSON text; compare against the parsed pose.
    const ToolPose pose{io::point_field(json::parse(msg.dump()), "tip", "p"),
                        io::direction_field(json::parse(msg.dump()), "direction", "p")};
    expected.push_back(service().frame_json(np, pose, mode, i));
  }
  const auto out = service().handle_text(s, text);
  ASSERT_EQ(out.size(), expected.size());
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i].dump(), expected[i].dump()) << i;
}

TEST(Protocol, FrameFieldsMatchOracle) {
  std::mt19937_64 rng(5);
  auto s = service().open_session();
  const auto& plan = service().plans()[0].plan;
  for (int i = 0; i < 200; ++i) {
    const Point3 tip = plan.skin_entry() + oracle::random_vector(rng, 4.0);
    const Vector3 dir = (plan.direction().vec() + oracle::random_vector(rng, 0.1)).normalized();
    const json f = service().handle_line(s, pose_msg(tip, dir).dump()).at(0);
    // The message carries the pose as JSON text; the oracle sees the same values.
    const json sent = json::parse(pose_msg(tip, dir).dump());
    const auto o = oracle::guidance(plan.skin_entry(), plan.target(), plan.direction().vec(),
                                    io::parse_point(sent.at("tip"), "tip"), io::parse_point(sent.at("direction"), "d"));
    ASSERT_NEAR(f.at("entry_offset").get<double>(), o.entry_offset, 1e-9);
    ASSERT_NEAR(f.at("target_offset").get<double>(), o.target_offset, 1e-9);
    ASSERT_NEAR(f.at("depth_to_target").get<double>(), o.depth, 1e-9);
    ASSERT_NEAR(f.at("angular_error").get<double>(), o.angle_deg, 1e-9);
  }
}

TEST(Protocol, MalformedMessageThenValidOneStillAnswered) {
  auto s = service().open_session();
  const auto& plan = service().plans()[0].plan;
  const std::string good = pose_msg(plan.skin_entry(), plan.direction().vec()).dump();
  const auto out = service().handle_text(s, "{not json\n" + good + "\n");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].at("kind"), "error");
  EXPECT_EQ(out[1].at("kind"), "frame");
}

TEST(Protocol, ErrorsCarrySeqAndLeaveSessionUnchanged) {
  auto s = service().open_session();
  const auto before = s;
  const std::vector<json> bad = {
      {{"kind", "wiggle"}, {"seq", 1}},
      {{"kind", "pose"}, {"tip", {0, 0}}, {"direction", {0, 0, 1}}, {"seq", 2}},
      {{"kind", "pose"}, {"tip", {0, 0, 0}}, {"direction", {0, 0, 0}}, {"seq", 3}},
      {{"kind", "plan"}, {"plan_id", 3}, {"seq", 4}},
      {{"kind", "plan"}, {"plan_id", 5}, {"mode", "drilling"}, {"seq", 5}},
      {{"kind", "plan"}, {"plan_id", "5"}, {"seq", 6}},
      {{"seq", 7}},
      json::array({1, 2}),
  };
  for (std::size_t i = 0; i < bad.size(); ++i) {
    const auto out = service().handle_line(s, bad[i].dump());
    ASSERT_EQ(out.size(), 1u) << i;
    EXPECT_EQ(out[0].at("kind"), "error") << i;
    if (bad[i].is_object()) {
      EXPECT_EQ(out[0].at("seq"), bad[i].at("seq")) << i;
    }
    EXPECT_EQ(s.active_plan, before.active_plan);
    EXPECT_EQ(s.mode, before.mode);
  }
}

TEST(Protocol, PlanSwitchChangesDefaults) {
  auto s = service().open_session();
  const auto out = service().handle_line(s, R"({"kind": "plan", "plan_id": 5, "mode": "insertion"})");
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].at("kind"), "plan");
  EXPECT_EQ(out[0].at("plan_id"), 5);
  EXPECT_EQ(out[1].at("kind"), "overlay");
  EXPECT_EQ(out[1].at("plan_id"), 5);
  EXPECT_EQ(s.active_plan, 5);
  EXPECT_EQ(s.mode, GuidanceMode::Insertion);

  const auto& p5 = service().find(5).plan;
  const auto f = service().handle_line(s, pose_msg(p5.skin_entry(), p5.direction().vec()).dump());
  EXPECT_EQ(f.at(0).at("plan_id"), 5);
  EXPECT_EQ(f.at(0).at("mode"), "insertion");
}

TEST(Protocol, InvalidOffsetsSerializeAsNull) {
  auto s = service().open_session();
  const auto& plan = service().plans()[0].plan;
  const Vector3 perpendicular = plan.direction().vec().unitOrthogonal();
  const json f = service().handle_line(s, pose_msg(plan.skin_entry(), perpendicular).dump()).at(0);
  EXPECT_FALSE(f.at("offsets_valid").get<bool>());
  EXPECT_TRUE(f.at("entry_offset").is_null());
  EXPECT_TRUE(f.at("target_offset").is_null());
  EXPECT_FALSE(f.at("on_trajectory").get<bool>());
}

TEST(Protocol, ServiceNeedsPlans) {
  EXPECT_THROW(protocol::GuidanceService({}, RigidTransform::identity()), InputError);
}

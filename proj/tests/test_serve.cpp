#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "oracles.hpp"
#include "tracenav/serve.hpp"

using namespace tracenav;
using protocol::json;
namespace websocket = serve::websocket;
using serve::tcp;

namespace {

std::shared_ptr<const protocol::GuidanceService> make_service() {
  const std::vector<NamedPlan> plans = {
      {0, "left", TrajectoryPlan(Point3(0, 0, 50), Point3(0, 0, 45), Point3(0, 0, 10))},
      {1, "right", TrajectoryPlan(Point3(30, 0, 40), Point3(28, 0, 36), Point3(10, 0, 0))}};
  const RigidTransform m2p(Eigen::AngleAxisd(-0.7, Vector3(1, 1, 0).normalized()).toRotationMatrix(), Vector3(5, 6, -7));
  return std::make_shared<const protocol::GuidanceService>(plans, m2p);
}

// Server on an ephemeral port, run on its own thread for the test's lifetime.
class LiveServer {
 public:
  LiveServer() : service_(make_service()), server_(service_, "127.0.0.1", 0), thread_([this] { server_.run(); }) {}
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  unsigned short port() const { return server_.port(); }
  const protocol::GuidanceService& service() const { return *service_; }

 private:
  std::shared_ptr<const protocol::GuidanceService> service_;
  serve::GuidanceServer server_;
  std::thread thread_;
};

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    serve::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }

  void send(const std::string& text) {
    ws_.text(true);
    ws_.write(serve::asio::buffer(text));
  }

  // Each reply arrives as one text frame holding one newline-terminated object.
  json receive() {
    serve::beast::flat_buffer buf;
    ws_.read(buf);
    EXPECT_TRUE(ws_.got_text());
    const std::string text = serve::beast::buffers_to_string(buf.data());
    EXPECT_FALSE(text.empty());
    EXPECT_EQ(text.back(), '\n');
    EXPECT_EQ(text.find('\n'), text.size() - 1);
    return json::parse(text);
  }

  ~Client() {
    serve::beast::error_code ignored;
    ws_.close(websocket::close_code::normal, ignored);
  }

 private:
  serve::asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

json pose_msg(const Point3& tip, const Vector3& dir, int seq) {
  return {{"kind", "pose"}, {"tip", {tip.x(), tip.y(), tip.z()}}, {"direction", {dir.x(), dir.y(), dir.z()}}, {"seq", seq}};
}

}  // namespace

TEST(Serve, GreetingThenPoseFrame) {
  LiveServer server;
  Client c(server.port());
  const auto expected = server.service().greeting(server.service().open_session());
  EXPECT_EQ(c.receive(), expected[0]);
  EXPECT_EQ(c.receive(), expected[1]);

  const auto& plan = server.service().plans()[0].plan;
  c.send(pose_msg(plan.skin_entry() - 5.0 * plan.direction().vec(), plan.direction().vec(), 1).dump());
  const json f = c.receive();
  EXPECT_EQ(f.at("kind"), "frame");
  EXPECT_EQ(f.at("seq"), 1);
  EXPECT_TRUE(f.at("on_trajectory").get<bool>());
}

TEST(Serve, MalformedMessageDoesNotEndSession) {
  LiveServer server;
  Client c(server.port());
  c.receive();
  c.receive();
  c.send("{\"kind\":");
  EXPECT_EQ(c.receive().at("kind"), "error");
  c.send(R"({"kind": "plan", "plan_id": 1})");
  EXPECT_EQ(c.receive().at("plan_id"), 1);
  EXPECT_EQ(c.receive().at("kind"), "overlay");
  const auto& plan = server.service().plans()[1].plan;
  c.send(pose_msg(plan.skin_entry(), plan.direction().vec(), 2).dump());
  const json f = c.receive();
  EXPECT_EQ(f.at("kind"), "frame");
  EXPECT_EQ(f.at("plan_id"), 1);
}

TEST(Serve, ScriptedPlaybackMatchesOfflineFrames) {
  LiveServer server;
  Client c(server.port());
  c.receive();
  c.receive();
  std::mt19937_64 rng(2024);
  const auto& np = server.service().plans()[0];
  int diverged = 0;
  double worst_ms = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Point3 tip = np.plan.skin_entry() + oracle::random_vector(rng, 6.0);
    const Vector3 dir = (np.plan.direction().vec() + oracle::random_vector(rng, 0.3)).normalized();
    const json msg = pose_msg(tip, dir, i);
    const json parsed = json::parse(msg.dump());
    const ToolPose pose{io::point_field(parsed, "tip", "p"), io::direction_field(parsed, "direction", "p")};
    const json offline = server.service().frame_json(np, pose, GuidanceMode::Marking, i);

    const auto t0 = std::chrono::steady_clock::now();
    c.send(msg.dump());
    const json live = c.receive();
    worst_ms = std::max(worst_ms, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    diverged += live.dump() != offline.dump();
  }
  EXPECT_EQ(diverged, 0);
  EXPECT_LT(worst_ms, 100.0);
}

TEST(Serve, BatchedLinesAnsweredInOrder) {
  LiveServer server;
  Client c(server.port());
  c.receive();
  c.receive();
  const auto& plan = server.service().plans()[0].plan;
  std::string text;
  for (int i = 0; i < 5; ++i) text += pose_msg(plan.skin_entry(), plan.direction().vec(), i).dump() + "\n";
  c.send(text);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(c.receive().at("seq"), i);
}

TEST(Serve, ConcurrentSessionsAreIndependent) {
  LiveServer server;
  Client a(server.port());
  Client b(server.port());
  for (Client* c : {&a, &b}) {
    c->receive();
    c->receive();
  }
  a.send(R"({"kind": "plan", "plan_id": 1, "mode": "insertion"})");
  a.receive();
  a.receive();
  const auto& plan = server.service().plans()[0].plan;
  const std::string pose = pose_msg(plan.skin_entry(), plan.direction().vec(), 9).dump();
  a.send(pose);
  b.send(pose);
  const json fa = a.receive();
  const json fb = b.receive();
  EXPECT_EQ(fa.at("plan_id"), 1);
  EXPECT_EQ(fa.at("mode"), "insertion");
  EXPECT_EQ(fb.at("plan_id"), 0);
  EXPECT_EQ(fb.at("mode"), "marking");
}

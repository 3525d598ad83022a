#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tracenav/guidance.hpp"
#include "tracenav/io.hpp"
#include "tracenav/phantom.hpp"

namespace tracenav::protocol {

using json = io::json;

// Per-connection state. Only the defaults for pose messages live here;
// every frame is a function of (plan, mode, pose) alone.
struct Session {
  int active_plan = 0;
  GuidanceMode mode = GuidanceMode::Marking;
};

inline json error_message(std::string_view message, const json& seq = nullptr) {
  json j = {{"kind", "error"}, {"message", message}};
  if (!seq.is_null()) j["seq"] = seq;
  return j;
}

/**
 * Message handler for the guidance service.
 *
 * Plans are given in the model frame and held in the patient frame, mapped by
 * the registration result. Each input line is one JSON message; each reply
 * is one JSON object. Immutable after construction, so one instance can
 * serve any number of sessions concurrently.
 *
 * Client messages:
 *   {"kind": "pose", "tip": [x,y,z], "direction": [x,y,z],
 *    "plan_id"?: int, "mode"?: "marking"|"insertion", "seq"?: any}  -> frame
 *   {"kind": "plan", "plan_id": int, "mode"?: ...}                   -> plan, overlay
 * Anything else gets an error reply; the session stays usable.
 */
class GuidanceService {
 public:
  GuidanceService(const std::vector<NamedPlan>& model_plans, const RigidTransform& model_to_patient,
                  GuidanceConfig guidance = {}, OverlayConfig overlay = {},
                  GuidanceMode default_mode = GuidanceMode::Marking)
      : guidance_(guidance), overlay_(overlay), default_mode_(default_mode) {
    if (model_plans.empty()) throw InputError("guidance service needs at least one plan");
    for (const auto& p : model_plans) plans_.push_back({p.id, p.side, p.plan.transformed(model_to_patient)});
  }

  const std::vector<NamedPlan>& plans() const { return plans_; }
  const GuidanceConfig& guidance_config() const { return guidance_; }

  Session open_session() const { return {plans_.front().id, default_mode_}; }

  // Sent once when a session starts: the active plan and its overlay.
  std::vector<json> greeting(const Session& s) const { return plan_messages(s); }

  // Handles one message line, returning replies in order.
  std::vector<json> handle_line(Session& s, std::string_view line) const {
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::parse_error&) {
      return {error_message("malformed JSON")};
    }
    const json seq = msg.is_object() && msg.contains("seq") ? msg.at("seq") : json(nullptr);
    try {
      if (!msg.is_object() || !msg.contains("kind") || !msg.at("kind").is_string()) {
        throw ParseError("message needs a string 'kind'");
      }
      const std::string kind = msg.at("kind").get<std::string>();
      if (kind == "pose") return {frame_message(s, msg, seq)};
      if (kind == "plan") {
        Session next = s;
        next.active_plan = plan_id_field(msg);
        if (msg.contains("mode")) next.mode = mode_field(msg);
        (void)find(next.active_plan);
        s = next;
        return plan_messages(s);
      }
      throw ParseError("unknown message kind '" + kind + "'");
    } catch (const Error& e) {
      return {error_message(e.what(), seq)};
    }
  }

  // Splits a text payload on newlines and handles each non-blank line.
  std::vector<json> handle_text(Session& s, std::string_view text) const {
    std::vector<json> out;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      const std::string_view line = text.substr(start, end - start);
      start = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      auto replies = handle_line(s, line);
      out.insert(out.end(), replies.begin(), replies.end());
    }
    return out;
  }

  // The frame reply for a pose against a plan, as sent on the wire.
  json frame_json(const NamedPlan& plan, const ToolPose& pose, GuidanceMode mode, const json& seq = nullptr) const {
    json j = io::guidance_frame_json(guidance_frame(plan.plan, pose, mode, guidance_));
    j["kind"] = "frame";
    j["plan_id"] = plan.id;
    j["mode"] = to_string(mode);
    if (!seq.is_null()) j["seq"] = seq;
    return j;
  }

  const NamedPlan& find(int id) const { return io::find_plan(plans_, id); }

 private:
  static int plan_id_field(const json& msg) {
    if (!msg.contains("plan_id") || !msg.at("plan_id").is_number_integer()) {
      throw ParseError("'plan_id' must be an integer");
    }
    return msg.at("plan_id").get<int>();
  }

  static GuidanceMode mode_field(const json& msg) {
    if (!msg.at("mode").is_string()) throw ParseError("'mode' must be a string");
    return io::parse_mode(msg.at("mode").get<std::string>());
  }

  json frame_message(const Session& s, const json& msg, const json& seq) const {
    const NamedPlan& plan = find(msg.contains("plan_id") ? plan_id_field(msg) : s.active_plan);
    const GuidanceMode mode = msg.contains("mode") ? mode_field(msg) : s.mode;
    const ToolPose pose{io::point_field(msg, "tip", "pose"), io::direction_field(msg, "direction", "pose")};
    return frame_json(plan, pose, mode, seq);
  }

  std::vector<json> plan_messages(const Session& s) const {
    const NamedPlan& p = find(s.active_plan);
    json ids = json::array();
    for (const auto& q : plans_) ids.push_back(q.id);
    json plan = {{"kind", "plan"}, {"plan_id", p.id}, {"mode", to_string(s.mode)},
                 {"plan", io::plan_json(p)}, {"plan_ids", ids}};
    json overlay = io::overlay_json(in_situ_overlay(p.plan, overlay_));
    overlay["kind"] = "overlay";
    overlay["plan_id"] = p.id;
    return {plan, overlay};
  }

  std::vector<NamedPlan> plans_;
  GuidanceConfig guidance_;
  OverlayConfig overlay_;
  GuidanceMode default_mode_;
};

}  // namespace tracenav::protocol

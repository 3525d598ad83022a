#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracenav/geometry.hpp"
#include "tracenav/guidance.hpp"
#include "tracenav/line_fit.hpp"
#include "tracenav/median.hpp"
#include "tracenav/wilcoxon.hpp"

namespace tracenav {

// Achieved catheter placement, as recovered from post-placement imaging.
struct PlacementResult {
  Line3 fitted_line;
  Point3 tip = Point3::Zero();
  Point3 skin_intersection = Point3::Zero();
  Point3 bone_intersection = Point3::Zero();
};

struct MetricsReport {
  double entry_offset = 0.0;       // mm, at the bone entry
  double skin_entry_offset = 0.0;  // mm, at the skin entry
  double angular_deviation = 0.0;  // degrees, [0, 90]
  double target_tip_error = 0.0;   // mm
  double target_depth_error = 0.0;
  double signed_depth_error = 0.0;  // mm, positive = too deep
  double target_radial_error = 0.0;
  std::optional<double> marking_time;    // s
  std::optional<double> insertion_time;  // s
};

// Builds a placement from samples along the inserted rod, ordered from the
// outside end to the tip. The tip is the most advanced sample projected onto
// the fitted line; entry points are where that line crosses the plan's
// skin-entry and bone-entry planes.
inline PlacementResult placement_from_rod(const TrajectoryPlan& plan, std::span<const Point3> rod) {
  PlacementResult r;
  r.fitted_line = fit_line(rod);
  const Vector3& dir = r.fitted_line.direction.vec();
  double s_max = -std::numeric_limits<double>::infinity();
  for (const auto& p : rod) s_max = std::max(s_max, (p - r.fitted_line.origin).dot(dir));
  r.tip = r.fitted_line.at(s_max);
  r.skin_intersection = line_plane_intersection(r.fitted_line, plan.skin_entry(), plan.direction());
  r.bone_intersection = line_plane_intersection(r.fitted_line, plan.bone_entry(), plan.direction());
  return r;
}

inline MetricsReport placement_metrics(const TrajectoryPlan& plan, const PlacementResult& result) {
  const Vector3& d = plan.direction().vec();
  MetricsReport m;
  m.entry_offset = (plan.bone_entry() - result.bone_intersection).norm();
  m.skin_entry_offset = (plan.skin_entry() - result.skin_intersection).norm();
  const double a = angle_between_deg(result.fitted_line.direction.vec(), d);
  m.angular_deviation = std::min(a, 180.0 - a);
  const Vector3 err = result.tip - plan.target();
  m.target_tip_error = err.norm();
  m.signed_depth_error = err.dot(d);
  m.target_depth_error = std::abs(m.signed_depth_error);
  m.target_radial_error = (err - m.signed_depth_error * d).norm();
  return m;
}

enum class Condition { ToolTracking, InSitu };

inline const char* to_string(Condition c) {
  return c == Condition::ToolTracking ? "tool_tracking" : "in_situ";
}

struct PairedSample {
  std::string user;
  Condition condition = Condition::ToolTracking;
  std::vector<double> values;
};

struct UserMedians {
  std::string user;
  double tool_tracking = 0.0;
  double in_situ = 0.0;
};

// One (tool-tracking, in-situ) median pair per user, ordered by user id.
// Samples for the same user and condition are pooled.
inline std::vector<UserMedians> collapse_medians(std::span<const PairedSample> trials) {
  std::map<std::string, std::array<std::vector<double>, 2>> pooled;
  for (const auto& t : trials) {
    if (t.values.empty()) throw InputError("paired sample for user '" + t.user + "' has no values");
    auto& slot = pooled[t.user][t.condition == Condition::ToolTracking ? 0 : 1];
    slot.insert(slot.end(), t.values.begin(), t.values.end());
  }
  std::vector<UserMedians> out;
  for (auto& [user, cond] : pooled) {
    if (cond[0].empty() || cond[1].empty()) {
      throw InputError("user '" + user + "' is missing a condition");
    }
    out.push_back({user, median(cond[0]), median(cond[1])});
  }
  return out;
}

inline WilcoxonResult paired_test(std::span<const UserMedians> medians) {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(medians.size());
  for (const auto& m : medians) pairs.emplace_back(m.tool_tracking, m.in_situ);
  return wilcoxon_signed_rank(pairs);
}

}  // namespace tracenav

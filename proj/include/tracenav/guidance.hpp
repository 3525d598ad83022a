#pragma once

#include <cmath>
#include <limits>

#include "tracenav/geometry.hpp"

namespace tracenav {

// A planned trajectory in one frame: skin entry, entry through the bone
// (on the entry->target segment) and target.
class TrajectoryPlan {
 public:
  TrajectoryPlan(const Point3& skin_entry, const Point3& bone_entry, const Point3& target)
      : skin_entry_(skin_entry), bone_entry_(bone_entry), target_(target) {
    if (!is_finite(skin_entry) || !is_finite(bone_entry) || !is_finite(target)) {
      throw InputError("trajectory plan has non-finite coordinates");
    }
    if ((target - skin_entry).norm() == 0.0) throw DegenerateInput("plan target equals skin entry");
    direction_ = UnitVector3(target - skin_entry);
    const double along = (bone_entry - skin_entry).dot(direction_.vec());
    const double length = (target - skin_entry).norm();
    const Vector3 lateral = (bone_entry - skin_entry) - along * direction_.vec();
    const double off_segment = std::max({0.0, -along, along - length});
    if (std::hypot(lateral.norm(), off_segment) > 0.5) {
      throw InputError("bone entry does not lie on the entry-target segment");
    }
  }

  const Point3& skin_entry() const { return skin_entry_; }
  const Point3& bone_entry() const { return bone_entry_; }
  const Point3& target() const { return target_; }
  // Unit vector from skin entry toward target.
  const UnitVector3& direction() const { return direction_; }
  Line3 line() const { return {skin_entry_, direction_}; }

  TrajectoryPlan transformed(const RigidTransform& t) const {
    return {t.apply(skin_entry_), t.apply(bone_entry_), t.apply(target_)};
  }

 private:
  Point3 skin_entry_, bone_entry_, target_;
  UnitVector3 direction_;
};

struct ToolPose {
  Point3 tip = Point3::Zero();
  UnitVector3 direction;  // insertion direction of the tool
};

enum class GuidanceMode { Marking, Insertion };

inline const char* to_string(GuidanceMode m) { return m == GuidanceMode::Marking ? "marking" : "insertion"; }

struct GuidanceConfig {
  double on_trajectory_offset_mm = 2.0;
  double on_trajectory_angle_deg = 2.0;
  double max_valid_angle_deg = 89.0;  // beyond this the plane intersections are not used
};

struct GuidanceFrame {
  bool offsets_valid = true;
  double entry_offset = 0.0;   // mm, in the entry plane; NaN when !offsets_valid
  double target_offset = 0.0;  // mm, in the target plane; NaN when !offsets_valid
  // Unit vector in the entry plane from the tool-line intersection toward the
  // planned entry; zero when the offset is zero or invalid.
  Vector3 entry_correction = Vector3::Zero();
  Point3 entry_intersection = Point3::Zero();
  Point3 target_intersection = Point3::Zero();
  double depth_to_target = 0.0;  // mm remaining along the plan; negative = overshoot
  double angular_error = 0.0;    // degrees, [0, 180]
  bool on_trajectory = false;
};

inline Point3 line_plane_intersection(const Line3& line, const Point3& plane_point,
                                      const UnitVector3& plane_normal) {
  const double denom = line.direction.dot(plane_normal.vec());
  if (std::abs(denom) <= 1e-9) throw NoIntersection("line is parallel to the plane");
  const double s = (plane_point - line.origin).dot(plane_normal.vec()) / denom;
  return line.at(s);
}

// Live guidance for a tracked tool against a plan. In marking mode the entry
// plane passes through the skin entry, in insertion mode through the bone
// entry; both planes use the plan direction as normal.
inline GuidanceFrame guidance_frame(const TrajectoryPlan& plan, const ToolPose& pose,
                                    GuidanceMode mode = GuidanceMode::Marking,
                                    const GuidanceConfig& cfg = {}) {
  if (!is_finite(pose.tip)) throw InputError("tool tip has non-finite coordinates");
  const Vector3& d = plan.direction().vec();
  const Point3& entry = mode == GuidanceMode::Marking ? plan.skin_entry() : plan.bone_entry();

  GuidanceFrame f;
  f.angular_error = angle_between_deg(pose.direction.vec(), d);
  f.depth_to_target = (plan.target() - pose.tip).dot(d);

  const double tilt = std::min(f.angular_error, 180.0 - f.angular_error);
  if (tilt > cfg.max_valid_angle_deg) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    f.offsets_valid = false;
    f.entry_offset = nan;
    f.target_offset = nan;
    f.entry_intersection = Point3::Constant(nan);
    f.target_intersection = Point3::Constant(nan);
    return f;
  }

  const Line3 tool{pose.tip, pose.direction};
  f.entry_intersection = line_plane_intersection(tool, entry, plan.direction());
  f.target_intersection = line_plane_intersection(tool, plan.target(), plan.direction());

  Vector3 to_entry = entry - f.entry_intersection;
  to_entry -= to_entry.dot(d) * d;
  f.entry_offset = to_entry.norm();
  Vector3 to_target = plan.target() - f.target_intersection;
  to_target -= to_target.dot(d) * d;
  f.target_offset = to_target.norm();
  if (f.entry_offset > 0.0) f.entry_correction = to_entry / f.entry_offset;

  f.on_trajectory = f.entry_offset <= cfg.on_trajectory_offset_mm &&
                    f.angular_error <= cfg.on_trajectory_angle_deg;
  return f;
}

// Static overlay primitives for a plan.
struct InSituOverlay {
  struct Disc {
    Point3 center;
    UnitVector3 normal;
    double diameter_mm;
  };
  struct Cylinder {
    Point3 start;  // at the target
    Point3 end;    // outside the skin
    double diameter_mm;
  };
  struct Sphere {
    Point3 center;
    double diameter_mm;
  };

  Disc entry_disc;
  Cylinder trajectory;
  Sphere target;
};

struct OverlayConfig {
  double disc_diameter_mm = 6.0;
  double cylinder_diameter_mm = 1.0;
  double protrusion_mm = 100.0;
  double sphere_diameter_mm = 4.0;
};

inline InSituOverlay in_situ_overlay(const TrajectoryPlan& plan, const OverlayConfig& cfg = {}) {
  const Vector3& d = plan.direction().vec();
  return InSituOverlay{
      {plan.skin_entry(), plan.direction(), cfg.disc_diameter_mm},
      {plan.target(), plan.skin_entry() - cfg.protrusion_mm * d, cfg.cylinder_diameter_mm},
      {plan.target(), cfg.sphere_diameter_mm},
  };
}

}  // namespace tracenav

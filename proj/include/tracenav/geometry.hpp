#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tracenav/error.hpp"

namespace tracenav {

// All lengths are millimetres.
using Point3 = Eigen::Vector3d;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

inline bool is_finite(const Vector3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// A direction with Euclidean norm 1. Construction normalizes; zero or
// non-finite input is rejected.
class UnitVector3 {
 public:
  UnitVector3() : v_(0.0, 0.0, 1.0) {}
  UnitVector3(double x, double y, double z) : UnitVector3(Vector3(x, y, z)) {}
  explicit UnitVector3(const Vector3& v) {
    const double n = v.norm();
    if (!is_finite(v) || !(n > 0.0)) {
      throw DegenerateInput("cannot normalize a zero or non-finite vector");
    }
    v_ = v / n;
  }

  const Vector3& vec() const { return v_; }
  operator const Vector3&() const { return v_; }  // NOLINT
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double dot(const Vector3& o) const { return v_.dot(o); }
  UnitVector3 operator-() const { return from_normalized(-v_); }

  // Wraps a vector already known to be unit length (norm within 1e-9).
  static UnitVector3 from_normalized(const Vector3& v) {
    UnitVector3 u;
    u.v_ = v;
    return u;
  }

 private:
  Vector3 v_;
};

// Angle between two directions in degrees, in [0, 180].
inline double angle_between_deg(const Vector3& a, const Vector3& b) {
  // atan2 form stays accurate near 0 and 180 degrees.
  return rad_to_deg(std::atan2(a.cross(b).norm(), a.dot(b)));
}

// Proper rigid motion p -> R p + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}

  RigidTransform(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation.allFinite() || !is_finite(translation)) {
      throw InputError("rigid transform has non-finite entries");
    }
    if (((rotation * rotation.transpose()) - Matrix3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
      throw InputError("rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw InputError("rotation determinant is not +1");
    }
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform translation_only(const Vector3& t) {
    return RigidTransform(Matrix3::Identity(), t);
  }

  static RigidTransform from_axis_angle(const Vector3& axis, double angle_deg,
                                        const Vector3& t = Vector3::Zero()) {
    const Matrix3 r =
        Eigen::AngleAxisd(deg_to_rad(angle_deg), axis.normalized()).toRotationMatrix();
    return RigidTransform(r, t);
  }

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  Vector3 rotate(const Vector3& v) const { return rotation_ * v; }
  UnitVector3 rotate(const UnitVector3& v) const {
    return UnitVector3::from_normalized(rotation_ * v.vec());
  }

  RigidTransform inverse() const {
    const Matrix3 rt = rotation_.transpose();
    return RigidTransform(rt, -(rt * translation_));
  }

  // Rotation angle in degrees, in [0, 180].
  double rotation_angle_deg() const {
    // atan2 of (2 sin, 2 cos) keeps full precision for tiny angles.
    const Vector3 v(rotation_(2, 1) - rotation_(1, 2), rotation_(0, 2) - rotation_(2, 0),
                    rotation_(1, 0) - rotation_(0, 1));
    return rad_to_deg(std::atan2(v.norm(), rotation_.trace() - 1.0));
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

 private:
  Matrix3 rotation_;
  Vector3 translation_;
};

// Result applies `b` first, then `a`.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

// Rotation angle (deg) and translation distance (mm) separating two poses.
struct PoseError {
  double rotation_deg = 0.0;
  double translation_mm = 0.0;
};

inline PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth) {
  const RigidTransform diff = compose(estimate, truth.inverse());
  return {diff.rotation_angle_deg(), (estimate.translation() - truth.translation()).norm()};
}

struct Line3 {
  Point3 origin = Point3::Zero();
  UnitVector3 direction;

  Point3 at(double s) const { return origin + s * direction.vec(); }
  double distance_to(const Point3& p) const {
    const Vector3 d = p - origin;
    return (d - d.dot(direction.vec()) * direction.vec()).norm();
  }
};

struct PointCloud {
  std::vector<Point3> points;
  // Empty, or the same length as `points`.
  std::vector<UnitVector3> normals;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}
  PointCloud(std::vector<Point3> pts, std::vector<UnitVector3> nrm)
      : points(std::move(pts)), normals(std::move(nrm)) {
    if (!normals.empty() && normals.size() != points.size()) {
      throw InputError("normals and points differ in length");
    }
  }

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
  PointCloud out;
  out.points.reserve(c.size());
  for (const auto& p : c.points) out.points.push_back(t.apply(p));
  out.normals.reserve(c.normals.size());
  for (const auto& n : c.normals) out.normals.push_back(t.rotate(n));
  return out;
}

inline std::vector<Point3> apply_transform(const RigidTransform& t, std::span<const Point3> pts) {
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

inline Point3 centroid(std::span<const Point3> pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Point3(c / static_cast<double>(pts.size()));
}

}  // namespace tracenav

#pragma once

#include <span>

#include "tracenav/geometry.hpp"

namespace tracenav {

// Total-least-squares line through a point set: passes through the centroid
// along the principal axis of the centered covariance. The direction is
// oriented so that it points from the first sample toward the last one.
inline Line3 fit_line(std::span<const Point3> points) {
  if (points.size() < 2) throw DegenerateInput("line fit needs at least two points");
  for (const auto& p : points) {
    if (!is_finite(p)) throw InputError("line fit input has non-finite coordinates");
  }
  const Point3 c = centroid(points);
  Matrix3 cov = Matrix3::Zero();
  double spread = 0.0;
  for (const auto& p : points) {
    const Vector3 d = p - c;
    cov += d * d.transpose();
    spread = std::max(spread, d.norm());
  }
  if (spread == 0.0) throw DegenerateInput("line fit input points are all coincident");

  Eigen::SelfAdjointEigenSolver<Matrix3> eig(cov);
  // Eigenvalues are ascending; the last column is the principal axis.
  Vector3 dir = eig.eigenvectors().col(2);
  if (dir.dot(points.back() - points.front()) < 0.0) dir = -dir;
  return Line3{c, UnitVector3(dir)};
}

inline Line3 fit_line(const PointCloud& cloud) { return fit_line(std::span<const Point3>(cloud.points)); }

}  // namespace tracenav

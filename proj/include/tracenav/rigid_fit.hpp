#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tracenav/geometry.hpp"

namespace tracenav {

/**
 * Closed-form least-squares rigid alignment of paired points (SVD of the
 * cross-covariance, scale fixed to 1).
 *
 * Returns the proper rotation and translation minimizing
 * sum ||R src_i + t - dst_i||^2. When the unconstrained optimum is a
 * reflection, the sign of the smallest singular direction is flipped so the
 * result always has det(R) = +1. No degeneracy checks are done here; callers
 * that need a unique answer validate the configuration first.
 */
inline RigidTransform estimate_rigid(std::span<const Point3> src, std::span<const Point3> dst) {
  if (src.size() != dst.size()) throw InputError("paired point sets differ in length");
  if (src.empty()) return RigidTransform::identity();

  const Point3 cs = centroid(src);
  const Point3 cd = centroid(dst);
  Matrix3 h = Matrix3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (dst[i] - cd) * (src[i] - cs).transpose();
  }
  Eigen::JacobiSVD<Matrix3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  Matrix3 s = Matrix3::Identity();
  if ((u * v.transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  const Matrix3 r = u * s * v.transpose();
  return RigidTransform(r, cd - r * cs);
}

inline double rms_residual(const RigidTransform& t, std::span<const Point3> src,
                           std::span<const Point3> dst) {
  if (src.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

// Named anatomical landmarks, matched to another set by position in the list.
struct LandmarkSet {
  std::vector<std::string> labels;
  std::vector<Point3> positions;

  std::size_t size() const { return positions.size(); }
};

struct LandmarkRegistration {
  RigidTransform transform;  // maps source into target
  double fre = 0.0;          // RMS residual after alignment, mm
};

// True when the second principal spread is below `rel_tol` times the first.
inline bool is_collinear(std::span<const Point3> pts, double rel_tol = 1e-6) {
  if (pts.size() < 3) return true;
  const Point3 c = centroid(pts);
  Matrix3 cov = Matrix3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix3> eig(cov, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return !(ev(2) > 0.0) || ev(1) <= rel_tol * rel_tol * ev(2);
}

inline LandmarkRegistration register_landmarks(const LandmarkSet& source, const LandmarkSet& target) {
  if (source.size() != target.size()) {
    throw DegenerateInput("landmark sets differ in length");
  }
  if (source.size() < 3) throw DegenerateInput("landmark registration needs at least three landmarks");
  for (const auto* set : {&source, &target}) {
    for (const auto& p : set->positions) {
      if (!is_finite(p)) throw InputError("landmark has non-finite coordinates");
    }
  }
  if (is_collinear(source.positions) || is_collinear(target.positions)) {
    throw DegenerateInput("landmarks are collinear");
  }
  LandmarkRegistration out;
  out.transform = estimate_rigid(source.positions, target.positions);
  out.fre = rms_residual(out.transform, source.positions, target.positions);
  return out;
}

}  // namespace tracenav

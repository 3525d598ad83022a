#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "tracenav/geometry.hpp"
#include "tracenav/neighbor_index.hpp"
#include "tracenav/rigid_fit.hpp"
#include "tracenav/voxel.hpp"

namespace tracenav {

struct IcpConfig {
  int max_iterations = 200;
  double fitness_tolerance = 1e-6;
  double rmse_tolerance = 1e-6;
};

struct IcpResult {
  RigidTransform delta;  // incremental transform applied on top of `init`
  double fitness = 0.0;  // matched / |source|
  double rmse = 0.0;     // over matched pairs; meaningless unless has_correspondences
  bool has_correspondences = false;
  int iterations = 0;
};

namespace detail {

struct Correspondences {
  std::vector<Point3> src;
  std::vector<Point3> dst;
  double fitness = 0.0;
  double rmse = 0.0;
};

inline Correspondences match(std::span<const Point3> source, const NeighborIndex& target,
                             const RigidTransform& t, double max_corr) {
  Correspondences c;
  double sum = 0.0;
  for (const auto& p : source) {
    const Point3 moved = t.apply(p);
    const Neighbor nn = target.nearest(moved);
    if (nn.distance <= max_corr) {
      c.src.push_back(moved);
      c.dst.push_back(target.points()[nn.index]);
      sum += nn.distance * nn.distance;
    }
  }
  if (!c.src.empty()) {
    c.fitness = static_cast<double>(c.src.size()) / static_cast<double>(source.size());
    c.rmse = std::sqrt(sum / static_cast<double>(c.src.size()));
  }
  return c;
}

}  // namespace detail

/**
 * Point-to-point ICP.
 *
 * Starting from `init`, alternates nearest-neighbor matching within
 * `max_corr` and the closed-form rigid update, for at most
 * `cfg.max_iterations` updates. Stops early once fitness and RMSE both change
 * by less than their tolerances between iterations. The returned `delta`
 * is the accumulated update, so the refined pose is compose(delta, init).
 */
inline IcpResult icp_point_to_point(std::span<const Point3> source, const NeighborIndex& target,
                                    const RigidTransform& init, double max_corr,
                                    const IcpConfig& cfg = {}) {
  if (source.empty()) throw InputError("ICP source cloud is empty");
  if (!(max_corr > 0.0)) throw InputError("ICP max correspondence distance must be positive");

  IcpResult result;
  RigidTransform current = init;
  detail::Correspondences corr = detail::match(source, target, current, max_corr);
  if (corr.src.empty()) return result;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const RigidTransform step = estimate_rigid(corr.src, corr.dst);
    result.delta = compose(step, result.delta);
    current = compose(step, current);
    const double prev_fitness = corr.fitness;
    const double prev_rmse = corr.rmse;
    corr = detail::match(source, target, current, max_corr);
    result.iterations = it + 1;
    if (corr.src.empty()) break;
    if (std::abs(corr.fitness - prev_fitness) < cfg.fitness_tolerance &&
        std::abs(corr.rmse - prev_rmse) < cfg.rmse_tolerance) {
      break;
    }
  }
  result.has_correspondences = !corr.src.empty();
  result.fitness = corr.fitness;
  result.rmse = corr.rmse;
  return result;
}

struct ScoreConfig {
  double close_mm = 5.0;
  double fitness_weight = 0.4;
  double rmse_weight = 0.6;
  double rmse_scale_mm = 10.0;  // RMSE normalizer, twice the close threshold
  double min_fitness = 0.7;
  double max_rmse_mm = 5.0;
};

struct AlignmentScore {
  double fitness = 0.0;
  double rmse = 0.0;  // 0 when no point is close
  std::size_t n_close = 0;
  std::size_t n_traced = 0;
  double score = 0.0;
  bool rejected = true;
};

// S = w_f * fitness + w_r * (1 - rmse / scale), or 0 when the alignment fails
// either acceptance limit.
inline AlignmentScore score_from(double fitness, double rmse, const ScoreConfig& cfg = {}) {
  AlignmentScore s;
  s.fitness = fitness;
  s.rmse = rmse;
  s.rejected = fitness < cfg.min_fitness || rmse > cfg.max_rmse_mm;
  s.score = s.rejected ? 0.0
                       : cfg.fitness_weight * fitness +
                             cfg.rmse_weight * (1.0 - rmse / cfg.rmse_scale_mm);
  return s;
}

inline AlignmentScore score_alignment(std::span<const Point3> traced, const NeighborIndex& model,
                                      const RigidTransform& t, const ScoreConfig& cfg = {}) {
  if (traced.empty()) throw InputError("cannot score an empty traced cloud");
  std::size_t n_close = 0;
  double sum = 0.0;
  for (const auto& p : traced) {
    const double d = model.nearest(t.apply(p)).distance;
    if (d <= cfg.close_mm) {
      ++n_close;
      sum += d * d;
    }
  }
  AlignmentScore s;
  if (n_close == 0) {
    s.n_traced = traced.size();
    return s;
  }
  s = score_from(static_cast<double>(n_close) / static_cast<double>(traced.size()),
                 std::sqrt(sum / static_cast<double>(n_close)), cfg);
  s.n_close = n_close;
  s.n_traced = traced.size();
  return s;
}

// Voxel sizes for the coarse-to-fine loop: `levels` values log-spaced from
// `coarse_mm` down to `fine_mm`, endpoints exact.
inline std::vector<double> scale_schedule(double coarse_mm = 10.0, double fine_mm = 0.1, int levels = 15) {
  if (levels < 2 || !(fine_mm > 0.0) || !(coarse_mm >= fine_mm)) {
    throw InputError("scale schedule needs two or more positive levels, coarse >= fine");
  }
  const double a = std::log10(coarse_mm);
  const double b = std::log10(fine_mm);
  std::vector<double> out(static_cast<std::size_t>(levels));
  for (int i = 0; i < levels; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(levels - 1);
    out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * f);
  }
  out.front() = coarse_mm;
  out.back() = fine_mm;
  return out;
}

struct MultiscaleConfig {
  std::vector<double> schedule = scale_schedule();
  double k_corr = 3.0;  // max correspondence distance = k_corr * voxel
  IcpConfig icp;
  ScoreConfig score;
};

struct ScaleRecord {
  double voxel_mm = 0.0;
  std::size_t source_points = 0;
  std::size_t target_points = 0;
  int iterations = 0;
  double icp_fitness = 0.0;
  double icp_rmse = 0.0;
  AlignmentScore candidate;  // full-resolution score of the candidate
  bool accepted = false;
};

struct RefineResult {
  RigidTransform best;  // maps traced points into the model frame
  AlignmentScore best_score;
  AlignmentScore initial_score;
  std::vector<ScaleRecord> scales;

  // Places the model in the traced (patient) frame.
  RigidTransform model_to_patient() const { return best.inverse(); }
};

/**
 * Coarse-to-fine ICP with best-so-far acceptance.
 *
 * The seed is scored first. At every voxel size both clouds are
 * downsampled, ICP runs from the current best with a correspondence radius of
 * k_corr * voxel, and the candidate compose(delta, best) replaces the best
 * only when its full-resolution score is strictly higher.
 */
inline RefineResult multiscale_refine(std::span<const Point3> traced, const PointCloud& model,
                                      const NeighborIndex& model_index, const RigidTransform& seed,
                                      const MultiscaleConfig& cfg = {}) {
  if (traced.empty()) throw InputError("traced cloud is empty");
  if (model.empty()) throw InputError("model cloud is empty");

  RefineResult out;
  out.best = seed;
  out.initial_score = score_alignment(traced, model_index, seed, cfg.score);
  out.best_score = out.initial_score;

  const PointCloud traced_cloud{std::vector<Point3>(traced.begin(), traced.end())};
  const PointCloud model_points{model.points};
  for (double voxel : cfg.schedule) {
    ScaleRecord rec;
    rec.voxel_mm = voxel;
    const PointCloud src = voxel_downsample(traced_cloud, voxel);
    const PointCloud dst = voxel_downsample(model_points, voxel);
    rec.source_points = src.size();
    rec.target_points = dst.size();
    const NeighborIndex dst_index(dst);

    const IcpResult icp = icp_point_to_point(src.points, dst_index, out.best, cfg.k_corr * voxel, cfg.icp);
    rec.iterations = icp.iterations;
    rec.icp_fitness = icp.fitness;
    rec.icp_rmse = icp.rmse;
    if (icp.has_correspondences) {
      const RigidTransform candidate = compose(icp.delta, out.best);
      rec.candidate = score_alignment(traced, model_index, candidate, cfg.score);
      if (rec.candidate.score > out.best_score.score) {
        out.best = candidate;
        out.best_score = rec.candidate;
        rec.accepted = true;
      }
    }
    out.scales.push_back(rec);
  }
  return out;
}

}  // namespace tracenav

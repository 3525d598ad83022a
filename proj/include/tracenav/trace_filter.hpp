#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tracenav/geometry.hpp"
#include "tracenav/median.hpp"
#include "tracenav/neighbor_index.hpp"

namespace tracenav {

// Dense model surface with normals and its nearest-neighbor index.
struct SurfaceModel {
  PointCloud cloud;
  NeighborIndex index;

  explicit SurfaceModel(PointCloud c) : cloud(std::move(c)), index(cloud) {}
};

struct TraceFilterConfig {
  double inlier_mm = 10.0;          // max distance to the nearest model point
  double removal_radius_mm = 10.0;  // run points this close to a fault are dropped
  double reentry_mm = 10.0;         // travel from the re-entry point needed to resume
  double projection_band_mm = 3.0;  // allowed height above the lowest sample along n_i
};

enum class BoundsState { InBounds, OutOfBounds };

enum class TraceEventKind { Accepted, RejectedOutlier, WentOutOfBounds, ReentryCandidateSet, ResumedInBounds };

struct TraceEvent {
  TraceEventKind kind = TraceEventKind::RejectedOutlier;
  std::optional<std::size_t> model_index;    // Accepted, ResumedInBounds
  std::optional<std::size_t> removed_count;  // WentOutOfBounds

  bool operator==(const TraceEvent&) const = default;
};

inline const char* to_string(TraceEventKind k) {
  switch (k) {
    case TraceEventKind::Accepted: return "accepted";
    case TraceEventKind::RejectedOutlier: return "rejected_outlier";
    case TraceEventKind::WentOutOfBounds: return "went_out_of_bounds";
    case TraceEventKind::ReentryCandidateSet: return "reentry_candidate_set";
    case TraceEventKind::ResumedInBounds: return "resumed_in_bounds";
  }
  return "unknown";
}

/// Keeps the samples q_j whose height along `n` is within `band_mm` of the
/// lowest sample. The lowest sample always survives; input order is kept.
inline std::vector<Point3> project_filter(std::span<const Point3> points, const UnitVector3& n,
                                          double band_mm = 3.0) {
  if (points.empty()) return {};
  double p_min = points.front().dot(n.vec());
  for (const auto& q : points) p_min = std::min(p_min, q.dot(n.vec()));
  std::vector<Point3> kept;
  kept.reserve(points.size());
  for (const auto& q : points) {
    if (q.dot(n.vec()) - p_min <= band_mm) kept.push_back(q);
  }
  return kept;
}

/**
 * Streaming surface-trace filter.
 *
 * Each stylus sample is gated against the nearest model point and run
 * through an in/out-of-bounds state machine:
 *
 *   in-bounds,  inlier                      -> link to nearest model point
 *   in-bounds,  outlier                     -> drop run points near q, go out
 *   out,        inlier, no re-entry point   -> remember q as re-entry point
 *   out,        inlier, far from re-entry   -> resume, link q
 *
 * Everything else is rejected without state change. A "run" is the set of
 * samples accepted since the last transition into the in-bounds state; a
 * fault never deletes samples from earlier runs.
 *
 * Single writer: call ingest() from one stream in order.
 */
class TraceSession {
 public:
  struct Sample {
    Point3 position;
    std::size_t model_index;
    bool alive;
  };

  explicit TraceSession(std::shared_ptr<const SurfaceModel> model, TraceFilterConfig cfg = {})
      : model_(std::move(model)), cfg_(cfg) {
    if (!model_ || model_->cloud.empty()) throw InputError("trace session needs a non-empty model");
    if (!model_->cloud.has_normals()) throw InputError("trace session model needs normals");
  }

  TraceEvent ingest(const Point3& q) {
    if (!is_finite(q)) throw InputError("trace sample has non-finite coordinates");
    const Neighbor nn = model_->index.nearest(q);
    const bool inlier = nn.distance <= cfg_.inlier_mm;

    if (state_ == BoundsState::InBounds) {
      if (inlier) {
        link(q, nn.index);
        return {TraceEventKind::Accepted, nn.index, std::nullopt};
      }
      std::size_t removed = 0;
      for (std::size_t id : current_run_) {
        Sample& s = samples_[id];
        if (s.alive && (s.position - q).norm() <= cfg_.removal_radius_mm) {
          s.alive = false;
          ++removed;
        }
      }
      live_count_ -= removed;
      current_run_.clear();
      state_ = BoundsState::OutOfBounds;
      reentry_.reset();
      return {TraceEventKind::WentOutOfBounds, std::nullopt, removed};
    }

    if (inlier && !reentry_) {
      reentry_ = q;
      return {TraceEventKind::ReentryCandidateSet, std::nullopt, std::nullopt};
    }
    if (inlier && (q - *reentry_).norm() > cfg_.reentry_mm) {
      state_ = BoundsState::InBounds;
      reentry_.reset();
      current_run_.clear();
      link(q, nn.index);
      return {TraceEventKind::ResumedInBounds, nn.index, std::nullopt};
    }
    return {TraceEventKind::RejectedOutlier, std::nullopt, std::nullopt};
  }

  BoundsState state() const { return state_; }
  const std::optional<Point3>& reentry() const { return reentry_; }
  const TraceFilterConfig& config() const { return cfg_; }
  const SurfaceModel& model() const { return *model_; }

  // Every sample ever accepted, including ones later removed (alive == false).
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t live_count() const { return live_count_; }

  // Live samples grouped by model index (Q_i), in acceptance order.
  std::map<std::size_t, std::vector<Point3>> associations() const {
    std::map<std::size_t, std::vector<Point3>> out;
    for (const auto& s : samples_) {
      if (s.alive) out[s.model_index].push_back(s.position);
    }
    return out;
  }

  // One robust point t_i per associated model index, in model-index order:
  // the projection filter along n_i, then the component-wise median.
  PointCloud representative_points() const {
    if (live_count_ == 0) throw EmptyTrace("trace session has no accepted samples");
    PointCloud out;
    for (const auto& [index, q] : associations()) {
      const auto kept = project_filter(q, model_->cloud.normals[index], cfg_.projection_band_mm);
      out.points.push_back(componentwise_median(kept));
    }
    return out;
  }

 private:
  void link(const Point3& q, std::size_t model_index) {
    current_run_.push_back(samples_.size());
    samples_.push_back({q, model_index, true});
    ++live_count_;
  }

  std::shared_ptr<const SurfaceModel> model_;
  TraceFilterConfig cfg_;
  BoundsState state_ = BoundsState::InBounds;
  std::optional<Point3> reentry_;
  std::vector<Sample> samples_;
  std::vector<std::size_t> current_run_;
  std::size_t live_count_ = 0;
};

}  // namespace tracenav

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "tracenav/geometry.hpp"

namespace tracenav {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exact nearest-neighbor search over a fixed point set (k-d tree).
//
// Queries return the same answer as an exhaustive scan, including the
// tie-break: among equidistant points the lowest index wins. The index is
// immutable once built and queries may run concurrently.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::span<const Point3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) throw InputError("cannot build a neighbor index over an empty cloud");
    for (const auto& p : points_) {
      if (!is_finite(p)) throw InputError("neighbor index input has non-finite coordinates");
    }
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }

  explicit NeighborIndex(const PointCloud& cloud) : NeighborIndex(std::span<const Point3>(cloud.points)) {}

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  Neighbor nearest(const Point3& q) const {
    Search s{q, std::numeric_limits<double>::infinity(), std::numeric_limits<std::uint32_t>::max()};
    search(0, s);
    return {s.best_index, std::sqrt(s.best_d2)};
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;

  struct Node {
    // Leaf: [begin, end) into order_. Inner: split axis/value and children.
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  struct Search {
    Point3 q;
    double best_d2;
    std::uint32_t best_index;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t n = begin; n < end; ++n) {
      lo = lo.cwiseMin(points_[order_[n]]);
      hi = hi.cwiseMax(points_[order_[n]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis] ||
                              (points_[a][axis] == points_[b][axis] && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::int32_t l = build(begin, mid);
    const std::int32_t r = build(mid, end);
    Node& node = nodes_[id];
    node.axis = axis;
    node.split = split;
    node.left = l;
    node.right = r;
    return id;
  }

  void search(std::int32_t id, Search& s) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::uint32_t n = node.begin; n < node.end; ++n) {
        const std::uint32_t idx = order_[n];
        const double d2 = (points_[idx] - s.q).squaredNorm();
        if (d2 < s.best_d2 || (d2 == s.best_d2 && idx < s.best_index)) {
          s.best_d2 = d2;
          s.best_index = idx;
        }
      }
      return;
    }
    // Left holds coordinates <= split, right holds >= split.
    const double diff = s.q[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    search(near, s);
    // Equality must still descend: an equidistant point there may carry a
    // lower index.
    if (diff * diff <= s.best_d2) search(far, s);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace tracenav

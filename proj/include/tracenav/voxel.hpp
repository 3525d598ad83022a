#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "tracenav/geometry.hpp"

namespace tracenav {

namespace detail {

struct VoxelKey {
  std::int64_t i, j, k;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& key) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(key.i) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(key.j) + 0xBF58476D1CE4E5B9ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(key.k) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey voxel_key(const Point3& p, double voxel) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

}  // namespace detail

// Replaces the points of every occupied cell of an axis-aligned grid with
// their centroid. Cells are keyed by floor(p / voxel) and emitted in order of
// first occupancy, so the output is deterministic.
inline PointCloud voxel_downsample(const PointCloud& c, double voxel) {
  if (!(voxel > 0.0) || !std::isfinite(voxel)) {
    throw InputError("voxel size must be positive");
  }
  if (c.empty()) return {};

  struct Cell {
    Point3 sum = Point3::Zero();
    Vector3 normal_sum = Vector3::Zero();
    std::size_t count = 0;
  };
  std::unordered_map<detail::VoxelKey, std::size_t, detail::VoxelKeyHash> slot;
  slot.reserve(c.size());
  std::vector<Cell> cells;

  const bool with_normals = c.has_normals();
  for (std::size_t n = 0; n < c.size(); ++n) {
    auto [it, inserted] = slot.try_emplace(detail::voxel_key(c.points[n], voxel), cells.size());
    if (inserted) cells.emplace_back();
    Cell& cell = cells[it->second];
    cell.sum += c.points[n];
    if (with_normals) cell.normal_sum += c.normals[n].vec();
    ++cell.count;
  }

  PointCloud out;
  out.points.reserve(cells.size());
  if (with_normals) out.normals.reserve(cells.size());
  for (const Cell& cell : cells) {
    out.points.push_back(cell.sum / static_cast<double>(cell.count));
    if (with_normals) {
      // Exactly opposing normals cancel; +z is used for that cell.
      const double n = cell.normal_sum.norm();
      out.normals.push_back(n > 0.0 ? UnitVector3::from_normalized(cell.normal_sum / n)
                                    : UnitVector3());
    }
  }
  return out;
}

}  // namespace tracenav

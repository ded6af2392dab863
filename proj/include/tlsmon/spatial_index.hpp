#pragma once

#include "tlsmon/cloud.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace tlsmon {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Exact KD-tree over an immutable snapshot of points. Queries are const and
// may run concurrently. Results are ordered by (distance, index).
class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(std::vector<Point3> points);
  explicit SpatialIndex(const PointCloud& cloud) : SpatialIndex(cloud.points) {}

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  // The k closest points; all points when k exceeds the size. Throws
  // Error(EmptyInput) on an empty index and Error(Parameter) for k == 0.
  std::vector<Neighbor> nearest(const Point3& query, std::size_t k) const;

  // Closest point only.
  Neighbor nearest_one(const Point3& query) const;
  // Closest point if it lies within max_distance (inclusive); same tie-break.
  std::optional<Neighbor> nearest_within(const Point3& query, double max_distance) const;

  // Every point within radius (inclusive).
  std::vector<Neighbor> within_radius(const Point3& query, double radius) const;
  // Same set as indices in traversal order (deterministic, unsorted); `out` is overwritten.
  void within_radius_unordered(const Point3& query, double radius, std::vector<std::uint32_t>& out) const;

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // leaf range into order_
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  int build(std::uint32_t begin, std::uint32_t end);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

std::vector<Neighbor> nearest_neighbors(const SpatialIndex& index, const Point3& query, std::size_t k);

}  // namespace tlsmon

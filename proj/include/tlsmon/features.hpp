#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/spatial_index.hpp"

#include <bitset>
#include <cstddef>
#include <span>
#include <vector>

namespace tlsmon {

// Cylindrical occupancy grid in a local reference frame:
// 8 azimuth x 4 radial x 4 elevation bins, binarised at the median count.
inline constexpr int kAzimuthBins = 8;
inline constexpr int kRadialBins = 4;
inline constexpr int kElevationBins = 4;
inline constexpr int kDescriptorBits = kAzimuthBins * kRadialBins * kElevationBins;

using Descriptor = std::bitset<kDescriptorBits>;

struct DescriptorParams {
  double radius = 3.0;            // support radius, metres
  std::size_t min_neighbors = 12;
  double elevation_scale = 0.05;  // elevation bin edge as a fraction of radius
};

struct FeatureSet {
  std::vector<std::size_t> keypoint_indices;
  std::vector<Descriptor> descriptors;
  double radius = 0.0;
  std::vector<std::size_t> dropped;  // requested keypoints with too few neighbours
};

// Requires normals on the cloud (their sign fixes the frame's z axis).
FeatureSet extract_descriptors(const PointCloud& cloud, const SpatialIndex& index,
                               std::span<const std::size_t> keypoints, const DescriptorParams& params);
FeatureSet extract_descriptors(const PointCloud& cloud, std::span<const std::size_t> keypoints, double radius);

// Hamming distance, minimised over the 180-degree flip of the in-plane
// axes (the sign of the frame's x axis is not recoverable on symmetric
// neighbourhoods).
int descriptor_distance(const Descriptor& a, const Descriptor& b);

struct KeypointParams {
  double scale = 1.5;         // neighbourhood radius for curvature, metres
  double nms_radius = 2.0;    // minimum keypoint separation, metres
  std::size_t max_keypoints = 300;
  std::size_t min_neighbors = 8;
};

// Highest local-curvature points, greedily thinned so no two keypoints lie
// within nms_radius. Deterministic (ties broken by index).
std::vector<std::size_t> select_keypoints(const PointCloud& cloud, const SpatialIndex& index,
                                          const KeypointParams& params);

struct Match {
  std::size_t source = 0;  // index into the source FeatureSet
  std::size_t target = 0;
  int distance = 0;
};

// Pairs that are each other's nearest descriptor (ties to lowest index).
std::vector<Match> mutual_nearest_matches(const FeatureSet& source, const FeatureSet& target);

// Greedy largest set of matches whose pairwise intra-cloud distances agree
// within epsilon. Returns indices into `matches`.
std::vector<std::size_t> geometric_consistency(const std::vector<Point3>& source_points,
                                               const std::vector<Point3>& target_points,
                                               const std::vector<Match>& matches, double epsilon);

}  // namespace tlsmon

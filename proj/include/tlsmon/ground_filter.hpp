#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/rigid_transform.hpp"

#include <array>
#include <limits>
#include <string_view>
#include <vector>

namespace tlsmon {

struct SubSlope {
  std::array<long, 2> cell_id{0, 0};
  std::vector<std::size_t> member_indices;  // own cell, absorbed sparse cells, and the overlap margin
  Plane plane;
  Point3 centroid = Point3::Zero();
  RigidTransform level_rotation;  // rotation only; applied about `centroid`
};

// Horizontal grid partition. Cells with fewer than min_points join the
// nearest populated cell; each populated cell also takes the points within
// `margin` of its border. Throws TooSparse below min_points in total.
std::vector<SubSlope> partition_subslopes(const PointCloud& cloud, double cell_size, std::size_t min_points,
                                          double margin = 0.0);

// Minimal rotation taking `normal` to +z.
RigidTransform leveling_rotation(const Point3& normal);

struct LeveledCloud {
  PointCloud cloud;  // member points rotated about the sub-slope centroid
  Point3 centroid = Point3::Zero();
  RigidTransform rotation;
  // Back to the input frame.
  Point3 restore(const Point3& p) const { return rotation.inverse().apply(p - centroid) + centroid; }
};

LeveledCloud level_subslope(const SubSlope& sub, const PointCloud& cloud);

struct ClothParams {
  double grid_resolution = 0.5;
  int rigidness = 2;
  double time_step = 0.65;
  double class_threshold = 0.5;
  int max_iterations = 500;
  double gravity = 0.2;
  double tolerance = 0.005;  // max per-step particle displacement at convergence
};

struct GroundLabeling {
  std::vector<Label> labels;
  std::size_t ground_count = 0;
  std::size_t vegetation_count = 0;
  int iterations = 0;
  double residual = 0.0;  // last max per-step displacement
};

// Cloth simulation on the z-inverted cloud. Throws NoConvergence with the
// residual when the cloth is still moving after max_iterations.
GroundLabeling csf_classify(const PointCloud& leveled, const ClothParams& params);

struct FilterParams {
  double cell_size = 10.0;
  double margin = 1.0;
  std::size_t min_points = 50;
  ClothParams cloth;
};

struct FilterResult {
  PointCloud ground;
  PointCloud removed;
  GroundLabeling labeling;
};

struct MaskEntry {
  std::size_t index = 0;
  Label label = Label::Ground;
};

// One entry per line: "+<index>" forces ground, "-<index>" vegetation.
// Blank lines and lines starting with '#' are skipped.
std::vector<MaskEntry> parse_mask(std::string_view text);
void apply_mask(GroundLabeling& labeling, const std::vector<MaskEntry>& mask);

// Partition, level, cloth-classify each sub-slope and merge; points seen by
// several sub-slopes take the label from the plane they fit best.
FilterResult filter_vegetation(const PointCloud& cloud, const FilterParams& params = {},
                               const std::vector<MaskEntry>& mask = {});

struct VisibilityParams {
  int directions = 32;
  double threshold = 0.25;
  double voxel = 0.25;
  double max_distance = 10.0;
  std::size_t neighbors = 8;
};

// Per-point ambient visibility (share of unblocked hemisphere rays through
// an occupancy grid) and its max difference to the k nearest neighbours.
std::vector<double> ambient_visibility(const PointCloud& cloud, const VisibilityParams& params);
GroundLabeling visibility_gradient_filter(const PointCloud& cloud, const VisibilityParams& params = {});

}  // namespace tlsmon

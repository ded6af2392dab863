#pragma once

#include "tlsmon/registration.hpp"

#include <vector>

namespace tlsmon {

struct MultiviewParams {
  // Denser keypoints than the pairwise default: shrubs take the strongest
  // curvature responses and look different from each station.
  FeatureParams features = [] {
    FeatureParams f;
    f.keypoints.max_keypoints = 800;
    f.keypoints.nms_radius = 1.5;
    return f;
  }();
  double gc_epsilon = 0.0;  // 0 = 3x median spacing of the target cluster
  // Two ICP passes: a loose one to absorb coarse error, then a tight one
  // that keeps only the overlap.
  double coarse_pair_dist = 1.0;
  double fine_pair_dist = 0.15;
  int icp_max_iter = 60;
  std::size_t icp_max_source_points = 20000;
  double min_overlap_ratio = 0.1;  // share of source points paired in the fine pass
  double max_overlap_rmse = 0.1;
};

struct MergeRecord {
  std::vector<std::size_t> target_members;  // cloud indices, frame kept
  std::vector<std::size_t> source_members;
  double similarity = 0.0;
  double rmse = 0.0;
  double overlap_ratio = 0.0;
};

struct MultiviewResult {
  std::vector<RigidTransform> transforms;  // per input cloud into the frame of cloud 0
  std::vector<MergeRecord> merges;
};

// Share of mutual-nearest descriptor matches between two feature sets,
// relative to the smaller set.
double descriptor_overlap(const FeatureSet& a, const FeatureSet& b);

// Hierarchical merging: the most similar pair of clusters is registered
// (coarse + ICP) and merged until one cluster remains. Throws
// DisconnectedViews when no remaining pair can be registered.
MultiviewResult register_multiview(const std::vector<PointCloud>& clouds, const MultiviewParams& params = {});

}  // namespace tlsmon

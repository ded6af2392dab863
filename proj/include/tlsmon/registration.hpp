#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/features.hpp"
#include "tlsmon/rigid_transform.hpp"
#include "tlsmon/spatial_index.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace tlsmon {

struct IcpParams {
  int max_iter = 60;
  double convergence_eps = 1e-9;  // metres of RMS improvement
  double max_pair_dist = std::numeric_limits<double>::infinity();
  std::size_t max_source_points = 0;  // 0 = use every source point
  bool accelerate = true;  // extrapolate consistent update directions
};

struct RegistrationResult {
  RigidTransform transform;
  double rmse = 0.0;  // inlier RMS distance at the final transform, metres
  int iterations = 0;
  bool converged = false;
  std::size_t inlier_count = 0;
  // Truncated RMS objective: entry 0 at the initial transform, then one per
  // iteration. Pairs beyond max_pair_dist contribute max_pair_dist, which
  // makes the sequence non-increasing.
  std::vector<double> objective_trace;
  std::vector<double> alpha_trace;  // hybrid registration only
};

// Point-to-point ICP. Throws NoOverlap when no pair is within max_pair_dist
// at the initial transform.
RegistrationResult icp(const PointCloud& source, const PointCloud& target, const IcpParams& params,
                       const RigidTransform& initial = RigidTransform::identity());
RegistrationResult icp(const PointCloud& source, const SpatialIndex& target_index, const IcpParams& params,
                       const RigidTransform& initial = RigidTransform::identity());

struct FeatureParams {
  KeypointParams keypoints;
  DescriptorParams descriptor;
  std::size_t normal_k = 16;
  Point3 viewpoint = Point3::Zero();  // used only when the cloud lacks normals
};

// Keypoints and descriptors for a cloud; estimates normals when absent.
struct CloudFeatures {
  FeatureSet features;
  std::vector<Point3> positions;  // one per descriptor
};
CloudFeatures compute_features(const PointCloud& cloud, const FeatureParams& params);
CloudFeatures compute_features(const PointCloud& cloud, const SpatialIndex& index, const FeatureParams& params);

struct CoarseParams {
  FeatureParams features;
  double gc_epsilon = 0.0;  // 0 = 3x median point spacing of the target
  std::size_t min_inliers = 3;
};

struct CoarseResult {
  RigidTransform transform;
  std::size_t matches = 0;
  std::size_t inliers = 0;
};

// Mutual-nearest descriptor matching, greedy geometric consistency, rigid
// fit. Throws InsufficientGeometry when fewer than min_inliers survive.
CoarseResult coarse_register(const PointCloud& source, const PointCloud& target, const CoarseParams& params);
CoarseResult coarse_register(const CloudFeatures& source, const CloudFeatures& target, double gc_epsilon,
                             std::size_t min_inliers = 3);

struct HybridParams {
  double alpha_start = 0.8;
  int alpha_steps = 5;
  CoarseParams coarse;
  IcpParams icp;
  double keep_fraction = 0.5;  // lowest-cost share of assigned pairs passed on to consistency filtering
};

// Linear alpha schedule from alpha_start down to exactly 0.
std::vector<double> alpha_schedule(double alpha_start, int steps);

// Global registration on keypoints: per alpha step, minimum-cost bipartite
// matching under sqrt(alpha d_feat^2 + (1 - alpha) d_euc^2), then a rigid
// fit; finished by plain ICP on all points.
RegistrationResult register_global_hybrid(const PointCloud& source, const PointCloud& target,
                                          const HybridParams& params);

struct RegistrationEvaluation {
  bool success = false;
  double pose_rmse = 0.0;
};

// RMS displacement between recovered and true transforms over the eight
// corners of a cube of side `diameter` centred on `center`. Success is
// inclusive at the threshold.
RegistrationEvaluation evaluate_registration(const RigidTransform& recovered, const RigidTransform& truth,
                                             double diameter, double success_threshold,
                                             const Point3& center = Point3::Zero());
RegistrationEvaluation evaluate_registration(const RegistrationResult& result, const RigidTransform& truth,
                                             double diameter, double success_threshold,
                                             const Point3& center = Point3::Zero());

}  // namespace tlsmon

#include "tlsmon/registration.hpp"

#include "tlsmon/assignment.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tlsmon {
namespace {

struct Pairing {
  std::vector<Point3> source;
  std::vector<Point3> target;
  double truncated_rms = 0.0;
  double inlier_rms = 0.0;
};

Pairing pair_points(const std::vector<Point3>& source, const SpatialIndex& target, const RigidTransform& t,
                    double max_dist) {
  Pairing out;
  const double cap2 = max_dist * max_dist;
  double truncated = 0.0, inlier = 0.0;
  for (const auto& s : source) {
    const auto nb = target.nearest_within(t.apply(s), max_dist);
    if (nb) {
      const double d2 = nb->distance * nb->distance;
      out.source.push_back(s);
      out.target.push_back(target.points()[nb->index]);
      inlier += d2;
      truncated += d2;
    } else {
      truncated += cap2;
    }
  }
  out.truncated_rms = source.empty() ? 0.0 : std::sqrt(truncated / static_cast<double>(source.size()));
  out.inlier_rms = out.source.empty() ? 0.0 : std::sqrt(inlier / static_cast<double>(out.source.size()));
  return out;
}

std::vector<Point3> subsample(const std::vector<Point3>& points, std::size_t max_points) {
  if (max_points == 0 || points.size() <= max_points) return points;
  const std::size_t stride = (points.size() + max_points - 1) / max_points;
  std::vector<Point3> out;
  out.reserve(points.size() / stride + 1);
  for (std::size_t i = 0; i < points.size(); i += stride) out.push_back(points[i]);
  return out;
}

using Vector6 = Eigen::Matrix<double, 6, 1>;
constexpr double kAccelCos = 0.9848;  // cos 10 deg

Vector6 to_params(const RigidTransform& t) {
  const Eigen::AngleAxisd aa(t.rotation);
  Vector6 p;
  p << aa.angle() * aa.axis(), t.translation;
  return p;
}

RigidTransform from_params(const Vector6& p) {
  RigidTransform t;
  const Eigen::Vector3d r = p.head<3>();
  const double angle = r.norm();
  if (angle > 0) t.rotation = Eigen::AngleAxisd(angle, r / angle).toRotationMatrix();
  t.translation = p.tail<3>();
  return t;
}

double pair_diameter(const std::vector<Point3>& source, const RigidTransform& t, const std::vector<Point3>& target) {
  Point3 lo = Point3::Constant(INFINITY), hi = Point3::Constant(-INFINITY);
  for (const auto& p : source) {
    const Point3 q = t.apply(p);
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  for (const auto& p : target) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

}  // namespace

RegistrationResult icp(const PointCloud& source, const PointCloud& target, const IcpParams& params,
                       const RigidTransform& initial) {
  if (target.empty()) throw Error(ErrorCode::EmptyInput, "icp target is empty");
  SpatialIndex index(target.points);
  return icp(source, index, params, initial);
}

RegistrationResult icp(const PointCloud& source, const SpatialIndex& target_index, const IcpParams& params,
                       const RigidTransform& initial) {
  if (source.empty() || target_index.size() == 0) throw Error(ErrorCode::EmptyInput, "icp needs non-empty clouds");
  const auto src = subsample(source.points, params.max_source_points);
  RegistrationResult result;
  result.transform = initial;
  auto pairing = pair_points(src, target_index, initial, params.max_pair_dist);
  if (pairing.source.empty()) {
    throw Error(ErrorCode::NoOverlap, "no point pairs within max_pair_dist at the initial pose");
  }
  result.objective_trace.push_back(pairing.truncated_rms);
  double previous = pairing.truncated_rms;
  Vector6 last_step = Vector6::Zero();
  for (int it = 1; it <= params.max_iter; ++it) {
    RigidTransform next;
    try {
      next = fit_rigid(pairing.source, pairing.target);
    } catch (const Error&) {
      break;  // pairs collapsed to a degenerate set; keep the last pose
    }
    auto next_pairing = pair_points(src, target_index, next, params.max_pair_dist);
    if (next_pairing.source.empty()) break;

    // Extrapolate along consistent update directions; kept only when the
    // objective keeps falling.
    const Vector6 step = to_params(next) - to_params(result.transform);
    if (params.accelerate && last_step.norm() > 0 && step.norm() > 0 &&
        step.dot(last_step) > kAccelCos * step.norm() * last_step.norm()) {
      const Vector6 base = to_params(next);
      for (double scale = 2.0; scale <= 64.0; scale *= 2.0) {
        const RigidTransform trial = from_params(base + (scale - 1.0) * step);
        auto trial_pairing = pair_points(src, target_index, trial, params.max_pair_dist);
        if (trial_pairing.source.size() < 3 || trial_pairing.truncated_rms >= next_pairing.truncated_rms) break;
        next = trial;
        next_pairing = std::move(trial_pairing);
      }
    }
    last_step = to_params(next) - to_params(result.transform);
    result.transform = next;
    result.iterations = it;
    result.objective_trace.push_back(next_pairing.truncated_rms);
    pairing = std::move(next_pairing);
    if (previous - pairing.truncated_rms < params.convergence_eps) {
      result.converged = true;
      break;
    }
    previous = pairing.truncated_rms;
  }
  result.rmse = pairing.inlier_rms;
  result.inlier_count = pairing.source.size();
  return result;
}

CloudFeatures compute_features(const PointCloud& cloud, const FeatureParams& params) {
  SpatialIndex index(cloud.points);
  return compute_features(cloud, index, params);
}

CloudFeatures compute_features(const PointCloud& cloud, const SpatialIndex& index, const FeatureParams& params) {
  const PointCloud* with_normals = &cloud;
  PointCloud estimated;
  if (!cloud.normals) {
    estimated = estimate_normals(cloud, index, std::min(params.normal_k, cloud.size()), params.viewpoint);
    with_normals = &estimated;
  }
  const auto keypoints = select_keypoints(*with_normals, index, params.keypoints);
  CloudFeatures out;
  out.features = extract_descriptors(*with_normals, index, keypoints, params.descriptor);
  for (auto k : out.features.keypoint_indices) out.positions.push_back(cloud.points[k]);
  return out;
}

CoarseResult coarse_register(const CloudFeatures& source, const CloudFeatures& target, double gc_epsilon,
                             std::size_t min_inliers) {
  const auto matches = mutual_nearest_matches(source.features, target.features);
  const auto kept = geometric_consistency(source.positions, target.positions, matches, gc_epsilon);
  CoarseResult out;
  out.matches = matches.size();
  out.inliers = kept.size();
  if (kept.size() < std::max<std::size_t>(3, min_inliers)) {
    throw Error(ErrorCode::InsufficientGeometry, "only " + std::to_string(kept.size()) +
                                                     " geometrically consistent matches (of " +
                                                     std::to_string(matches.size()) + ")");
  }
  std::vector<Point3> s, t;
  for (auto k : kept) {
    s.push_back(source.positions[matches[k].source]);
    t.push_back(target.positions[matches[k].target]);
  }
  try {
    out.transform = fit_rigid(s, t);
  } catch (const Error& e) {
    throw Error(ErrorCode::InsufficientGeometry, std::string("consistent matches are degenerate: ") + e.what());
  }
  return out;
}

CoarseResult coarse_register(const PointCloud& source, const PointCloud& target, const CoarseParams& params) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyInput, "coarse registration needs points");
  SpatialIndex target_index(target.points);
  const auto fs = compute_features(source, params.features);
  const auto ft = compute_features(target, target_index, params.features);
  const double eps = params.gc_epsilon > 0 ? params.gc_epsilon : 3.0 * median_spacing(target_index);
  return coarse_register(fs, ft, eps, params.min_inliers);
}

std::vector<double> alpha_schedule(double alpha_start, int steps) {
  if (steps < 1) throw Error(ErrorCode::Parameter, "alpha_steps must be >= 1");
  if (steps == 1) return {0.0};
  std::vector<double> out(steps);
  for (int k = 0; k < steps; ++k) out[k] = alpha_start * static_cast<double>(steps - 1 - k) / (steps - 1);
  return out;
}

RegistrationResult register_global_hybrid(const PointCloud& source, const PointCloud& target,
                                          const HybridParams& params) {
  if (source.empty() || target.empty()) throw Error(ErrorCode::EmptyInput, "hybrid registration needs points");
  SpatialIndex target_index(target.points);
  const auto fs = compute_features(source, params.coarse.features);
  const auto ft = compute_features(target, target_index, params.coarse.features);
  const double eps =
      params.coarse.gc_epsilon > 0 ? params.coarse.gc_epsilon : 3.0 * median_spacing(target_index);
  const auto ns = fs.positions.size(), nt = ft.positions.size();
  if (ns < 3 || nt < 3) throw Error(ErrorCode::InsufficientGeometry, "too few keypoints for hybrid matching");

  // Start from centroid alignment so the Euclidean term is meaningful.
  RigidTransform current;
  current.translation = centroid(target.points) - centroid(source.points);

  const auto schedule = alpha_schedule(params.alpha_start, params.alpha_steps);
  Eigen::MatrixXd feat(ns, nt);
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < nt; ++j) {
      const double d = descriptor_distance(fs.features.descriptors[i], ft.features.descriptors[j]);
      feat(i, j) = d / kDescriptorBits;
    }
  }
  Eigen::MatrixXd cost(ns, nt);
  for (double alpha : schedule) {
    const double diam = pair_diameter(source.points, current, target.points);
    for (std::size_t i = 0; i < ns; ++i) {
      const Point3 s = current.apply(fs.positions[i]);
      for (std::size_t j = 0; j < nt; ++j) {
        const double e = (s - ft.positions[j]).norm() / diam;
        cost(i, j) = std::sqrt(alpha * feat(i, j) * feat(i, j) + (1.0 - alpha) * e * e);
      }
    }
    const auto assignment = solve_assignment(cost);
    std::vector<Match> pairs;
    for (std::size_t i = 0; i < ns; ++i) {
      if (assignment[i] >= 0) pairs.push_back({i, static_cast<std::size_t>(assignment[i]), 0});
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [&](const Match& a, const Match& b) { return cost(a.source, a.target) < cost(b.source, b.target); });
    const auto keep = std::max<std::size_t>(
        3, static_cast<std::size_t>(std::ceil(params.keep_fraction * static_cast<double>(pairs.size()))));
    if (pairs.size() > keep) pairs.resize(keep);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      pairs[k].distance = static_cast<int>(k);  // rank as tie-break in consistency growth
    }
    const auto kept = geometric_consistency(fs.positions, ft.positions, pairs, eps);
    if (kept.size() >= 3) {
      std::vector<Point3> s, t;
      for (auto k : kept) {
        s.push_back(fs.positions[pairs[k].source]);
        t.push_back(ft.positions[pairs[k].target]);
      }
      try {
        current = fit_rigid(s, t);
      } catch (const Error&) {
        // keep the previous estimate
      }
    }
  }
  auto result = icp(source, target_index, params.icp, current);
  result.alpha_trace = schedule;
  return result;
}

RegistrationEvaluation evaluate_registration(const RigidTransform& recovered, const RigidTransform& truth,
                                             double diameter, double success_threshold, const Point3& center) {
  if (!(diameter > 0)) throw Error(ErrorCode::Parameter, "diameter must be positive");
  const double h = diameter / 2.0;
  double sum = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Point3 p = center + Point3((c & 1) ? h : -h, (c & 2) ? h : -h, (c & 4) ? h : -h);
    sum += (recovered.apply(p) - truth.apply(p)).squaredNorm();
  }
  RegistrationEvaluation out;
  out.pose_rmse = std::sqrt(sum / 8.0);
  out.success = out.pose_rmse <= success_threshold;
  return out;
}

RegistrationEvaluation evaluate_registration(const RegistrationResult& result, const RigidTransform& truth,
                                             double diameter, double success_threshold, const Point3& center) {
  return evaluate_registration(result.transform, truth, diameter, success_threshold, center);
}

}  // namespace tlsmon

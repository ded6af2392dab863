#include "tlsmon/multiview.hpp"

#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace tlsmon {
namespace {

struct Cluster {
  std::vector<std::size_t> members;
  std::vector<RigidTransform> to_cluster;  // parallel to members
  PointCloud merged;
  CloudFeatures features;
};

struct PairResult {
  RigidTransform transform;
  double rmse = 0.0;
  double ratio = 0.0;
};

std::size_t used_source_points(std::size_t n, std::size_t max_points) {
  if (max_points == 0 || n <= max_points) return n;
  const std::size_t stride = (n + max_points - 1) / max_points;
  return (n + stride - 1) / stride;
}

std::optional<PairResult> register_pair(const Cluster& source, const Cluster& target, const MultiviewParams& params) {
  SpatialIndex index(target.merged.points);
  const double eps = params.gc_epsilon > 0 ? params.gc_epsilon : 3.0 * median_spacing(index);
  try {
    const auto coarse = coarse_register(source.features, target.features, eps);
    IcpParams ip;
    ip.max_iter = params.icp_max_iter;
    ip.max_source_points = params.icp_max_source_points;
    ip.max_pair_dist = params.coarse_pair_dist;
    const auto loose = icp(source.merged, index, ip, coarse.transform);
    ip.max_pair_dist = params.fine_pair_dist;
    const auto fine = icp(source.merged, index, ip, loose.transform);
    PairResult out;
    out.transform = fine.transform;
    out.rmse = fine.rmse;
    out.ratio = static_cast<double>(fine.inlier_count) /
                static_cast<double>(used_source_points(source.merged.size(), ip.max_source_points));
    if (out.ratio < params.min_overlap_ratio || out.rmse > params.max_overlap_rmse) return std::nullopt;
    return out;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InsufficientGeometry || e.code() == ErrorCode::NoOverlap ||
        e.code() == ErrorCode::DegenerateCorrespondences) {
      return std::nullopt;
    }
    throw;
  }
}

Cluster merge(const Cluster& target, const Cluster& source, const RigidTransform& t) {
  Cluster out = target;
  for (std::size_t i = 0; i < source.members.size(); ++i) {
    out.members.push_back(source.members[i]);
    out.to_cluster.push_back(t * source.to_cluster[i]);
  }
  const std::size_t offset = target.merged.size();
  for (const auto& p : source.merged.points) out.merged.points.push_back(t.apply(p));
  auto& f = out.features;
  for (std::size_t k = 0; k < source.features.positions.size(); ++k) {
    f.positions.push_back(t.apply(source.features.positions[k]));
    f.features.descriptors.push_back(source.features.features.descriptors[k]);
    f.features.keypoint_indices.push_back(source.features.features.keypoint_indices[k] + offset);
  }
  return out;
}

std::string describe(const std::vector<Cluster>& clusters) {
  std::ostringstream os;
  os << "views split into " << clusters.size() << " components:";
  for (const auto& c : clusters) {
    auto m = c.members;
    std::sort(m.begin(), m.end());
    os << " {";
    for (std::size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
    os << "}";
  }
  return os.str();
}

}  // namespace

double descriptor_overlap(const FeatureSet& a, const FeatureSet& b) {
  const auto smaller = std::min(a.descriptors.size(), b.descriptors.size());
  if (smaller == 0) return 0.0;
  return static_cast<double>(mutual_nearest_matches(a, b).size()) / static_cast<double>(smaller);
}

MultiviewResult register_multiview(const std::vector<PointCloud>& clouds, const MultiviewParams& params) {
  if (clouds.empty()) throw Error(ErrorCode::EmptyInput, "register_multiview needs at least one cloud");
  MultiviewResult result;
  if (clouds.size() == 1) {
    result.transforms.assign(1, RigidTransform::identity());
    return result;
  }
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (clouds[i].empty()) throw Error(ErrorCode::EmptyInput, "cloud " + std::to_string(i) + " is empty");
    Cluster c;
    c.members = {i};
    c.to_cluster = {RigidTransform::identity()};
    c.merged.points = clouds[i].points;
    SpatialIndex index(clouds[i].points);
    c.features = compute_features(clouds[i], index, params.features);
    clusters.push_back(std::move(c));
  }

  while (clusters.size() > 1) {
    struct Candidate {
      std::size_t a, b;
      double similarity;
    };
    std::vector<Candidate> candidates;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        candidates.push_back({a, b, descriptor_overlap(clusters[a].features.features, clusters[b].features.features)});
      }
    }
    // Clusters stay ordered by their smallest member, so (a, b) breaks ties.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& x, const Candidate& y) { return x.similarity > y.similarity; });
    bool merged = false;
    for (const auto& cand : candidates) {
      if (cand.similarity <= 0) break;
      const auto& target = clusters[cand.a];
      const auto& source = clusters[cand.b];
      const auto pair = register_pair(source, target, params);
      if (!pair) continue;
      MergeRecord record{target.members, source.members, cand.similarity, pair->rmse, pair->ratio};
      Cluster joined = merge(target, source, pair->transform);
      clusters.erase(clusters.begin() + static_cast<long>(cand.b));
      clusters[cand.a] = std::move(joined);
      result.merges.push_back(std::move(record));
      merged = true;
      break;
    }
    if (!merged) throw Error(ErrorCode::DisconnectedViews, describe(clusters));
  }

  const auto& root = clusters.front();
  result.transforms.resize(clouds.size());
  for (std::size_t i = 0; i < root.members.size(); ++i) result.transforms[root.members[i]] = root.to_cluster[i];
  return result;
}

}  // namespace tlsmon

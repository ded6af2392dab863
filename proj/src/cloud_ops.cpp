#include "tlsmon/cloud_ops.hpp"

#include "tlsmon/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace tlsmon {
namespace {

Point3 orient_up(Point3 n) {
  for (int k = 0; k < 3; ++k) {
    if (std::abs(n[k]) < 1e-12) n[k] = 0.0;
  }
  n.normalize();
  int ref = 2;
  if (n.z() == 0.0) ref = n.x() != 0.0 ? 0 : 1;
  if (n[ref] < 0) n = -n;
  return n;
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) + 0x94D049BB133111EBull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

PlaneFit fit_plane(std::span<const Point3> points) {
  PlaneFit fit;
  if (points.empty()) return fit;
  Point3 c = Point3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Point3 d = p - c;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  fit.centroid = c;
  fit.eigenvalues = solver.eigenvalues();
  fit.eigenvectors = solver.eigenvectors();
  fit.plane.normal = orient_up(solver.eigenvectors().col(0));
  fit.plane.offset = fit.plane.normal.dot(c);
  return fit;
}

std::pair<Point3, Point3> plane_basis(const Point3& normal) {
  const Point3 n = normal.normalized();
  // Seed with the world axis least aligned with the normal.
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Point3 seed = Point3::Unit(axis);
  Point3 e1 = seed - n * n.dot(seed);
  e1.normalize();
  Point3 e2 = n.cross(e1);
  return {e1, e2};
}

PointCloud estimate_normals(const PointCloud& cloud, std::size_t k, const Point3& viewpoint) {
  if (k < 3) throw Error(ErrorCode::Parameter, "normal estimation needs k >= 3");
  SpatialIndex index(cloud.points);
  return estimate_normals(cloud, index, k, viewpoint);
}

PointCloud estimate_normals(const PointCloud& cloud, const SpatialIndex& index, std::size_t k,
                            const Point3& viewpoint) {
  if (k < 3) throw Error(ErrorCode::Parameter, "normal estimation needs k >= 3");
  if (cloud.size() < k) throw Error(ErrorCode::Parameter, "cloud has fewer points than k");
  PointCloud out = cloud;
  const auto n = cloud.size();
  out.normals.emplace(n, Point3::UnitZ());
  out.normal_valid.emplace(n, 0);
  auto& curvature = out.scalars["curvature"];
  curvature.assign(n, 0.0);
  std::vector<Point3> hood;
  hood.reserve(k);
  for (std::size_t i = 0; i < n; ++i) {
    hood.clear();
    for (const auto& nb : index.nearest(cloud.points[i], k)) hood.push_back(index.points()[nb.index]);
    const auto fit = fit_plane(hood);
    const auto& ev = fit.eigenvalues;
    if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) continue;
    Point3 normal = fit.eigenvectors.col(0).normalized();
    if (normal.dot(viewpoint - cloud.points[i]) < 0) normal = -normal;
    (*out.normals)[i] = normal;
    (*out.normal_valid)[i] = 1;
    curvature[i] = ev[0] / ev.sum();
  }
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double cell) {
  if (!(cell > 0)) throw Error(ErrorCode::Parameter, "voxel cell must be positive");
  std::unordered_map<CellKey, std::size_t, CellKeyHash> slot;
  std::vector<Point3> sums;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> owner(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    CellKey key{static_cast<std::int64_t>(std::floor(p.x() / cell)),
                static_cast<std::int64_t>(std::floor(p.y() / cell)),
                static_cast<std::int64_t>(std::floor(p.z() / cell))};
    auto [it, inserted] = slot.try_emplace(key, sums.size());
    if (inserted) {
      sums.push_back(Point3::Zero());
      counts.push_back(0);
    }
    sums[it->second] += p;
    ++counts[it->second];
    owner[i] = it->second;
  }
  PointCloud out;
  out.epoch_id = cloud.epoch_id;
  out.origin_shift = cloud.origin_shift;
  out.points.resize(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) out.points[c] = sums[c] / static_cast<double>(counts[c]);
  for (const auto& [name, values] : cloud.scalars) {
    std::vector<double> acc(sums.size(), 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) acc[owner[i]] += values[i];
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] /= static_cast<double>(counts[c]);
    out.scalars[name] = std::move(acc);
  }
  return out;
}

double median_spacing(const SpatialIndex& index, std::size_t samples) {
  const auto n = index.size();
  if (n < 2) return 0.0;
  const std::size_t stride = std::max<std::size_t>(1, n / samples);
  std::vector<double> d;
  for (std::size_t i = 0; i < n; i += stride) d.push_back(index.nearest(index.points()[i], 2)[1].distance);
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

}  // namespace tlsmon

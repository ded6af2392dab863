#include "tlsmon/features.hpp"

#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace tlsmon {
namespace {

constexpr double kPi = 3.14159265358979323846;

int bit_index(int az, int rad, int elev) { return (az * kRadialBins + rad) * kElevationBins + elev; }

Descriptor flip_azimuth(const Descriptor& d) {
  Descriptor out;
  for (int az = 0; az < kAzimuthBins; ++az) {
    const int shifted = (az + kAzimuthBins / 2) % kAzimuthBins;
    for (int r = 0; r < kRadialBins; ++r) {
      for (int e = 0; e < kElevationBins; ++e) out[bit_index(shifted, r, e)] = d[bit_index(az, r, e)];
    }
  }
  return out;
}

}  // namespace

FeatureSet extract_descriptors(const PointCloud& cloud, const SpatialIndex& index,
                               std::span<const std::size_t> keypoints, const DescriptorParams& params) {
  if (!(params.radius > 0)) throw Error(ErrorCode::Parameter, "descriptor radius must be positive");
  if (!cloud.normals) throw Error(ErrorCode::Parameter, "descriptor extraction needs normals");
  const double r = params.radius;
  const double edge = params.elevation_scale * r;
  FeatureSet out;
  out.radius = r;
  std::vector<Point3> hood;
  for (auto kp : keypoints) {
    const Point3& p = cloud.points[kp];
    const auto nbrs = index.within_radius(p, r);
    if (nbrs.size() < params.min_neighbors) {
      out.dropped.push_back(kp);
      continue;
    }
    hood.clear();
    for (const auto& nb : nbrs) hood.push_back(index.points()[nb.index]);
    const auto fit = fit_plane(hood);

    Point3 z = fit.eigenvectors.col(0).normalized();
    if (z.dot((*cloud.normals)[kp]) < 0) z = -z;
    const double snap = 1e-9 * r;

    // In-plane axis: dominant direction of relief (height-weighted scatter
    // about the keypoint); planar neighbourhoods fall back to the largest
    // covariance axis.
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    double relief = 0.0;
    for (const auto& q : hood) {
      const double h = (q - fit.centroid).dot(z);
      if (std::abs(h) <= snap) continue;
      const Point3 d = (q - p) - z * (q - p).dot(z);
      scatter += (h * h) * (d * d.transpose());
      relief += h * h;
    }
    Point3 x;
    if (relief > snap * snap * static_cast<double>(hood.size())) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
      x = solver.eigenvectors().col(2);
    } else {
      x = fit.eigenvectors.col(2);
    }
    x -= z * x.dot(z);
    x.normalize();
    double skew = 0.0;
    for (const auto& q : hood) {
      const double a = (q - p).dot(x);
      skew += a * a * a;
    }
    if (skew < 0) x = -x;
    const Point3 y = z.cross(x);

    std::array<int, kDescriptorBits> counts{};
    for (const auto& q : hood) {
      const Point3 d = q - p;
      const double u = d.dot(x), v = d.dot(y);
      double h = (q - fit.centroid).dot(z);
      if (std::abs(h) <= snap) h = 0.0;
      const double rho = std::sqrt(u * u + v * v);
      int az = static_cast<int>(std::floor((std::atan2(v, u) + kPi) / (2 * kPi) * kAzimuthBins));
      az = std::clamp(az, 0, kAzimuthBins - 1);
      int rad = std::clamp(static_cast<int>(rho / r * kRadialBins), 0, kRadialBins - 1);
      int elev = h < -edge ? 0 : h < 0 ? 1 : h < edge ? 2 : 3;
      ++counts[bit_index(az, rad, elev)];
    }
    auto sorted = counts;
    std::nth_element(sorted.begin(), sorted.begin() + kDescriptorBits / 2, sorted.end());
    const int median = sorted[kDescriptorBits / 2];
    Descriptor desc;
    for (int b = 0; b < kDescriptorBits; ++b) desc[b] = counts[b] > median;
    out.keypoint_indices.push_back(kp);
    out.descriptors.push_back(desc);
  }
  return out;
}

FeatureSet extract_descriptors(const PointCloud& cloud, std::span<const std::size_t> keypoints, double radius) {
  SpatialIndex index(cloud.points);
  DescriptorParams params;
  params.radius = radius;
  return extract_descriptors(cloud, index, keypoints, params);
}

int descriptor_distance(const Descriptor& a, const Descriptor& b) {
  const int direct = static_cast<int>((a ^ b).count());
  if (direct == 0) return 0;
  const int flipped = static_cast<int>((a ^ flip_azimuth(b)).count());
  return std::min(direct, flipped);
}

std::vector<std::size_t> select_keypoints(const PointCloud& cloud, const SpatialIndex& index,
                                          const KeypointParams& params) {
  const auto n = cloud.size();
  std::vector<double> curvature(n, 0.0);
  std::vector<std::uint32_t> nbrs;
  for (std::size_t i = 0; i < n; ++i) {
    index.within_radius_unordered(cloud.points[i], params.scale, nbrs);
    if (nbrs.size() < params.min_neighbors) continue;
    // Covariance accumulated about the query point to limit cancellation.
    Point3 sum = Point3::Zero();
    Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
    for (auto nb : nbrs) {
      const Point3 d = index.points()[nb] - cloud.points[i];
      sum += d;
      outer.noalias() += d * d.transpose();
    }
    const double k = static_cast<double>(nbrs.size());
    const Eigen::Matrix3d cov = outer / k - (sum / k) * (sum / k).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(cov, Eigen::EigenvaluesOnly);
    const Eigen::Vector3d ev = eig.eigenvalues().cwiseMax(0.0);
    const double total = ev.sum();
    if (total > 0) curvature[i] = ev[0] / total;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return curvature[a] > curvature[b]; });

  std::vector<std::uint8_t> suppressed(n, 0);
  std::vector<std::size_t> picked;
  for (auto i : order) {
    if (picked.size() >= params.max_keypoints) break;
    if (suppressed[i]) continue;
    picked.push_back(i);
    index.within_radius_unordered(cloud.points[i], params.nms_radius, nbrs);
    for (auto nb : nbrs) suppressed[nb] = 1;
  }
  return picked;
}

std::vector<Match> mutual_nearest_matches(const FeatureSet& source, const FeatureSet& target) {
  const auto ns = source.descriptors.size(), nt = target.descriptors.size();
  std::vector<Match> out;
  if (ns == 0 || nt == 0) return out;
  std::vector<int> dist(ns * nt);
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < nt; ++j) dist[i * nt + j] = descriptor_distance(source.descriptors[i], target.descriptors[j]);
  }
  std::vector<std::size_t> best_t(ns), best_s(nt);
  for (std::size_t i = 0; i < ns; ++i) {
    std::size_t b = 0;
    for (std::size_t j = 1; j < nt; ++j) {
      if (dist[i * nt + j] < dist[i * nt + b]) b = j;
    }
    best_t[i] = b;
  }
  for (std::size_t j = 0; j < nt; ++j) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < ns; ++i) {
      if (dist[i * nt + j] < dist[b * nt + j]) b = i;
    }
    best_s[j] = b;
  }
  for (std::size_t i = 0; i < ns; ++i) {
    if (best_s[best_t[i]] == i) out.push_back({i, best_t[i], dist[i * nt + best_t[i]]});
  }
  return out;
}

std::vector<std::size_t> geometric_consistency(const std::vector<Point3>& source_points,
                                               const std::vector<Point3>& target_points,
                                               const std::vector<Match>& matches, double epsilon) {
  const auto m = matches.size();
  if (m == 0) return {};
  std::vector<std::uint8_t> ok(m * m, 0);
  std::vector<int> degree(m, 0);
  for (std::size_t a = 0; a < m; ++a) {
    ok[a * m + a] = 1;
    for (std::size_t b = a + 1; b < m; ++b) {
      if (matches[a].source == matches[b].source || matches[a].target == matches[b].target) continue;
      const double ds = (source_points[matches[a].source] - source_points[matches[b].source]).norm();
      const double dt = (target_points[matches[a].target] - target_points[matches[b].target]).norm();
      if (std::abs(ds - dt) <= epsilon) {
        ok[a * m + b] = ok[b * m + a] = 1;
        ++degree[a];
        ++degree[b];
      }
    }
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (degree[a] != degree[b]) return degree[a] > degree[b];
    return matches[a].distance < matches[b].distance;
  });

  std::vector<std::size_t> best;
  const std::size_t seeds = std::min<std::size_t>(m, 16);
  for (std::size_t s = 0; s < seeds; ++s) {
    std::vector<std::size_t> set{order[s]};
    for (auto c : order) {
      if (c == order[s]) continue;
      bool all = true;
      for (auto x : set) {
        if (!ok[c * m + x]) {
          all = false;
          break;
        }
      }
      if (all) set.push_back(c);
    }
    if (set.size() > best.size()) best = std::move(set);
  }
  std::sort(best.begin(), best.end());
  return best;
}

}  // namespace tlsmon

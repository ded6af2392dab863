#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/spatial_index.hpp"

#include <Eigen/Core>

#include <span>
#include <utility>

namespace tlsmon {

// Points x with normal.dot(x) == offset.
struct Plane {
  Point3 normal = Point3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Point3& p) const { return normal.dot(p) - offset; }
};

struct PlaneFit {
  Plane plane;
  Point3 centroid = Point3::Zero();
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // ascending
  Eigen::Matrix3d eigenvectors = Eigen::Matrix3d::Identity();  // columns match eigenvalues
};

// Least-squares plane. The normal is oriented upward (positive z); a
// horizontal normal is oriented toward its first non-zero component.
// Components below 1e-12 are flushed to zero so axis-aligned input stays exact.
PlaneFit fit_plane(std::span<const Point3> points);

// Orthonormal in-plane basis (e1, e2) with e1 x e2 == normal.
std::pair<Point3, Point3> plane_basis(const Point3& normal);

// Smallest-eigenvalue direction of each k-neighbourhood, oriented so that
// dot(normal, viewpoint - point) >= 0. Collinear neighbourhoods get
// normal_valid = 0. Also fills scalar "curvature" (lambda0 / trace).
PointCloud estimate_normals(const PointCloud& cloud, std::size_t k, const Point3& viewpoint);
PointCloud estimate_normals(const PointCloud& cloud, const SpatialIndex& index, std::size_t k,
                            const Point3& viewpoint);

// One centroid per occupied cubic cell, ordered by first occurrence. Scalar
// channels are averaged; normals and labels are dropped.
PointCloud voxel_downsample(const PointCloud& cloud, double cell);

// Median nearest-neighbour distance over (at most) `samples` evenly strided points.
double median_spacing(const SpatialIndex& index, std::size_t samples = 2000);

}  // namespace tlsmon

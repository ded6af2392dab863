#pragma once

#include "tlsmon/cloud.hpp"

#include <Eigen/Core>

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tlsmon {

// Maps source-frame coordinates into the reference frame: y = R x + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
  // Rotation of angle_rad about a (normalised) axis, then translation.
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  Point3 apply_direction(const Point3& v) const { return rotation * v; }

  // (this * other)(x) == this(other(x))
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;
  Eigen::Matrix4d matrix() const;

  bool is_proper(double tol = 1e-9) const;
};

// Points, normals and origin shift carried through the transform. The output
// keeps the input origin_shift; coordinates are in the transformed local frame.
PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

// Convert between a transform acting on shifted coordinates (source relative
// to source_shift, result relative to target_shift) and one acting on
// absolute coordinates.
RigidTransform to_absolute(const RigidTransform& local, const Point3& source_shift, const Point3& target_shift);
RigidTransform to_local(const RigidTransform& absolute, const Point3& source_shift, const Point3& target_shift);

// 16 numbers, row-major, one row per line.
std::string format_matrix(const RigidTransform& t);
RigidTransform parse_matrix(std::string_view text);

// Least-squares rigid fit (Kabsch with reflection correction) minimising
// sum |R s + t - d|^2. Throws DegenerateCorrespondences for < 3 pairs or
// collinear sources/targets.
RigidTransform fit_rigid(const std::vector<std::pair<Point3, Point3>>& pairs);
RigidTransform fit_rigid(const std::vector<Point3>& source, const std::vector<Point3>& target);

}  // namespace tlsmon

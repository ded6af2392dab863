#include "tlsmon/rigid_transform.hpp"

#include "tlsmon/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <charconv>
#include <cmath>
#include <sstream>

namespace tlsmon {

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  RigidTransform t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                               const Eigen::Vector3d& translation) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  t.translation = translation;
  return t;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_proper(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
  return ortho < tol && rotation.determinant() > 0;
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t.apply(p);
  if (out.normals) {
    for (auto& n : *out.normals) n = t.apply_direction(n);
  }
  return out;
}

RigidTransform to_absolute(const RigidTransform& local, const Point3& source_shift, const Point3& target_shift) {
  RigidTransform out = local;
  out.translation = local.translation + target_shift - local.rotation * source_shift;
  return out;
}

RigidTransform to_local(const RigidTransform& absolute, const Point3& source_shift, const Point3& target_shift) {
  RigidTransform out = absolute;
  out.translation = absolute.translation - target_shift + absolute.rotation * source_shift;
  return out;
}

std::string format_matrix(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      char buf[32];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(r, c));
      if (c) out += ' ';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

RigidTransform parse_matrix(std::string_view text) {
  std::istringstream in{std::string(text)};
  Eigen::Matrix4d m;
  for (int i = 0; i < 16; ++i) {
    if (!(in >> m(i / 4, i % 4))) throw Error(ErrorCode::Parse, "transform file needs 16 numbers");
  }
  return RigidTransform::from_matrix(m);
}

RigidTransform fit_rigid(const std::vector<Point3>& source, const std::vector<Point3>& target) {
  if (source.size() != target.size()) throw Error(ErrorCode::Parameter, "pair lists differ in length");
  const auto n = source.size();
  if (n < 3) {
    throw Error(ErrorCode::DegenerateCorrespondences, "rigid fit needs at least 3 pairs, got " + std::to_string(n));
  }
  Point3 cs = Point3::Zero(), ct = Point3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cs += source[i];
    ct += target[i];
  }
  cs /= static_cast<double>(n);
  ct /= static_cast<double>(n);

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d ss = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Point3 a = source[i] - cs;
    h += a * (target[i] - ct).transpose();
    ss += a * a.transpose();
  }
  // Both the source spread and the cross-covariance must have rank >= 2.
  Eigen::JacobiSVD<Eigen::Matrix3d> spread(ss);
  const auto sv_spread = spread.singularValues();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (!(sv_spread[0] > 0) || sv_spread[1] <= 1e-12 * sv_spread[0] || !(sv[0] > 0) || sv[1] <= 1e-12 * sv[0]) {
    throw Error(ErrorCode::DegenerateCorrespondences, "correspondences are collinear or coincident");
  }
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ct - t.rotation * cs;
  return t;
}

RigidTransform fit_rigid(const std::vector<std::pair<Point3, Point3>>& pairs) {
  std::vector<Point3> s, d;
  s.reserve(pairs.size());
  d.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    s.push_back(a);
    d.push_back(b);
  }
  return fit_rigid(s, d);
}

}  // namespace tlsmon

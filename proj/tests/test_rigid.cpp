#include "doctest.h"

#include "tlsmon/error.hpp"
#include "tlsmon/rigid_transform.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

using namespace tlsmon;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Stage;
}

RigidTransform random_transform(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
  return RigidTransform::from_axis_angle(Point3(n(rng), n(rng), n(rng)), a(rng), Point3(n(rng), n(rng), n(rng)) * 5);
}

}  // namespace

TEST_CASE("fit recovers a known motion") {
  const auto truth = RigidTransform::from_axis_angle(Point3::UnitZ(), 30.0 * std::numbers::pi / 180, Point3(1, 2, 3));
  const std::vector<Point3> src{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<std::pair<Point3, Point3>> pairs;
  for (const auto& p : src) pairs.emplace_back(p, truth.apply(p));
  const auto fit = fit_rigid(pairs);
  CHECK((fit.matrix() - truth.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.is_proper());
  const double c = std::cos(std::numbers::pi / 6), s = std::sin(std::numbers::pi / 6);
  Eigen::Matrix3d expected;
  expected << c, -s, 0, s, c, 0, 0, 0, 1;
  CHECK((fit.rotation - expected).norm() < 1e-12);
}

TEST_CASE("fit on random motions and noise-free clouds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truth = random_transform(rng);
    std::vector<Point3> src(20), dst;
    for (auto& p : src) p = Point3(u(rng), u(rng), u(rng));
    for (const auto& p : src) dst.push_back(truth.apply(p));
    const auto fit = fit_rigid(src, dst);
    CHECK((fit.matrix() - truth.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(fit.rotation.determinant() - 1) < 1e-12);
  }
}

TEST_CASE("planar mirror images still give a rotation") {
  // Coplanar points and their reflection: the best proper fit must not reflect.
  const std::vector<Point3> src{{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {1, 3, 0}};
  std::vector<Point3> dst;
  for (const auto& p : src) dst.emplace_back(-p.x(), p.y(), p.z());
  const auto fit = fit_rigid(src, dst);
  CHECK(fit.is_proper());
}

TEST_CASE("degenerate correspondences") {
  CHECK(code_of([] { fit_rigid(std::vector<std::pair<Point3, Point3>>{{Point3::Zero(), Point3::Zero()}, {Point3::UnitX(), Point3::UnitX()}}); }) ==
        ErrorCode::DegenerateCorrespondences);
  std::vector<Point3> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  CHECK(code_of([&] { fit_rigid(line, line); }) == ErrorCode::DegenerateCorrespondences);
  CHECK(code_of([&] { fit_rigid(line, std::vector<Point3>(3)); }) == ErrorCode::Parameter);
}

TEST_CASE("composition and inverse") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_transform(rng), b = random_transform(rng);
    const Point3 p(1.5, -2, 0.25);
    CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
    CHECK(((a * b).matrix() - a.matrix() * b.matrix()).norm() < 1e-12);
    CHECK(RigidTransform::from_matrix(a.matrix()).matrix() == a.matrix());
  }
  Eigen::Matrix4d bad = Eigen::Matrix4d::Identity();
  bad(0, 0) = -1;
  CHECK(!RigidTransform::from_matrix(bad).is_proper());
}

TEST_CASE("matrix text round trip") {
  std::mt19937_64 rng(5);
  const auto t = random_transform(rng);
  const auto back = parse_matrix(format_matrix(t));
  CHECK((back.matrix() - t.matrix()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(code_of([] { parse_matrix("1 0 0 0\n0 1 0 0\n0 0 1 0\n"); }) == ErrorCode::Parse);
  CHECK(code_of([] { parse_matrix("1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 x"); }) == ErrorCode::Parse);
}

TEST_CASE("local and absolute frames") {
  std::mt19937_64 rng(11);
  const auto local = random_transform(rng);
  const Point3 src_shift(500000, 4100000, 900), dst_shift(500010, 4100020, 905);
  const auto abs = to_absolute(local, src_shift, dst_shift);
  const Point3 p_local(3, -4, 2);
  // local maps (p - src_shift) to (q - dst_shift).
  CHECK((abs.apply(p_local + src_shift) - (local.apply(p_local) + dst_shift)).norm() < 1e-6);
  CHECK((to_local(abs, src_shift, dst_shift).matrix() - local.matrix()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("cloud transform carries normals") {
  PointCloud c;
  c.points = {{1, 0, 0}, {0, 2, 0}};
  c.normals = std::vector<Point3>{Point3::UnitZ(), Point3::UnitX()};
  c.origin_shift = Point3(7, 8, 9);
  const auto t = RigidTransform::from_axis_angle(Point3::UnitY(), std::numbers::pi / 2, Point3(0, 0, 1));
  const auto out = transform_cloud(c, t);
  CHECK(out.origin_shift == c.origin_shift);
  CHECK((out.points[0] - Point3(0, 0, 0)).norm() < 1e-12);
  CHECK(((*out.normals)[0] - Point3(1, 0, 0)).norm() < 1e-12);
  CHECK(((*out.normals)[1] - Point3(0, 0, -1)).norm() < 1e-12);
}

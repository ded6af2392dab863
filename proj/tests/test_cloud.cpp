#include "doctest.h"

#include "tlsmon/cloud.hpp"
#include "tlsmon/cloud_io.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <map>
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

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double scale = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

}  // namespace

TEST_CASE("xyz parsing") {
  const auto c = parse_cloud("0 0 0\n1 0 0\n0 1 0", CloudFormat::XyzAscii);
  REQUIRE(c.size() == 3);
  // Centroid (1/3, 1/3, 0) rounds to the origin.
  CHECK(c.origin_shift == Point3::Zero());
  CHECK(c.points[1] == Point3(1, 0, 0));
  CHECK(c.points[2] == Point3(0, 1, 0));

  const auto shifted = parse_cloud("# header\n\n500100.25 4200000.5 812.75 17\n500101.25 4200001.5 813.75 19\n",
                                   CloudFormat::XyzAscii);
  CHECK(shifted.origin_shift == Point3(500101, 4200001, 813));
  CHECK(shifted.points[0] == Point3(-0.75, -0.5, -0.25));
  CHECK(shifted.scalars.at("intensity") == std::vector<double>{17, 19});

  try {
    parse_cloud("a b c\n", CloudFormat::XyzAscii);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  try {
    parse_cloud("1 2 3\n4 5\n", CloudFormat::XyzAscii);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("ply header edge cases") {
  const std::string empty = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  CHECK(parse_cloud(empty, CloudFormat::Ply).empty());

  const std::string int_coords = "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n1 2 3\n";
  CHECK(code_of([&] { parse_cloud(int_coords, CloudFormat::Ply); }) == ErrorCode::Format);
  const std::string odd_type = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float128 x\nend_header\n";
  CHECK(code_of([&] { parse_cloud(odd_type, CloudFormat::Ply); }) == ErrorCode::Format);
  const std::string big_endian = "ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n";
  CHECK(code_of([&] { parse_cloud(big_endian, CloudFormat::Ply); }) == ErrorCode::Format);
  const std::string short_record = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 5\n";
  CHECK(code_of([&] { parse_cloud(short_record, CloudFormat::Ply); }) == ErrorCode::Parse);
}

TEST_CASE("32-bit ply coordinates and extra properties") {
  PlyData d;
  d.vertex_property_names = {"x", "y", "z", "displacement_m"};
  d.vertex_columns = {{1.5, 2.5}, {0.25, -1.0}, {3.0, 4.0}, {0.125, -0.5}};
  for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
    const auto c = parse_cloud(write_ply(d, enc), CloudFormat::Ply);
    REQUIRE(c.size() == 2);
    CHECK((c.points[1] + c.origin_shift - Point3(2.5, -1.0, 4.0)).norm() < 1e-12);
    CHECK(c.scalars.at("displacement_m") == std::vector<double>{0.125, -0.5});
  }
}

TEST_CASE("write/parse round trip") {
  auto c = random_cloud(200, 3);
  for (auto& p : c.points) p += Point3(651234.0, 3712345.0, 1500.0);
  c.scalars["displacement_m"].resize(c.size());
  c.labels.emplace(c.size(), Label::Ground);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c.scalars["displacement_m"][i] = u(rng) * 1e-3;
    if (i % 3 == 0) (*c.labels)[i] = Label::Vegetation;
  }
  c.normals.emplace();
  for (std::size_t i = 0; i < c.size(); ++i) c.normals->push_back(Point3(u(rng), u(rng), 1).normalized());

  SUBCASE("ply binary and ascii") {
    for (auto enc : {PlyEncoding::BinaryLittleEndian, PlyEncoding::Ascii}) {
      const std::string bytes = write_cloud(c, CloudFormat::Ply, true, enc);
      CHECK(bytes.find("property double displacement_m") != std::string::npos);
      const auto back = parse_cloud(bytes, CloudFormat::Ply);
      REQUIRE(back.size() == c.size());
      for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK((back.points[i] + back.origin_shift - (c.points[i] + c.origin_shift)).norm() < 1e-6);
        CHECK((*back.normals)[i].isApprox((*c.normals)[i], 1e-12));
        CHECK((*back.labels)[i] == (*c.labels)[i]);
      }
      CHECK(back.scalars.at("displacement_m") == c.scalars.at("displacement_m"));
    }
  }
  SUBCASE("xyz keeps order and coordinates") {
    const auto back = parse_cloud(write_cloud(c, CloudFormat::XyzAscii, false), CloudFormat::XyzAscii);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK((back.points[i] + back.origin_shift - (c.points[i] + c.origin_shift)).norm() < 1e-6);
    }
  }
  SUBCASE("scalars left out on request") {
    const auto back = parse_cloud(write_cloud(c, CloudFormat::Ply, false), CloudFormat::Ply);
    CHECK(back.scalars.count("displacement_m") == 0);
  }
  SUBCASE("empty cloud") {
    const auto bytes = write_cloud(PointCloud{}, CloudFormat::Ply, true);
    CHECK(bytes.find("element vertex 0") != std::string::npos);
    CHECK(parse_cloud(bytes, CloudFormat::Ply).empty());
  }
  SUBCASE("files") {
    const auto path = std::filesystem::temp_directory_path() / "tlsmon_test_cloud.ply";
    save_cloud(path, c);
    const auto back = load_cloud(path);
    CHECK(back.size() == c.size());
    std::filesystem::remove(path);
    CHECK(code_of([&] { load_cloud(path); }) == ErrorCode::Io);
    CHECK(code_of([] { format_from_path("cloud.las"); }) == ErrorCode::Format);
  }
}

TEST_CASE("cloud validation and channel plumbing") {
  PointCloud c = random_cloud(5, 1);
  c.validate();
  c.scalars["s"] = {1, 2, 3};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::Parameter);
  c.scalars["s"] = {0, 1, 2, 3, 4};
  c.normals = std::vector<Point3>(5, Point3(0, 0, 2));
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::Parameter);
  c.normals = std::vector<Point3>(5, Point3::UnitZ());
  c.validate();

  const auto s = select(c, {4, 1});
  REQUIRE(s.size() == 2);
  CHECK(s.points[0] == c.points[4]);
  CHECK(s.scalars.at("s") == std::vector<double>{4, 1});

  PointCloud b = random_cloud(3, 2);
  b.origin_shift = Point3(10, 0, 0);
  const auto joined = concatenate(c, b);
  CHECK(joined.size() == 8);
  CHECK(joined.scalars.count("s") == 0);  // only on one side
  CHECK((joined.points[5] - (b.points[0] + Point3(10, 0, 0))).norm() < 1e-12);

  PointCloud r = b;
  rebase(r, Point3(4, 5, 6));
  CHECK(r.origin_shift == Point3(4, 5, 6));
  for (std::size_t i = 0; i < r.size(); ++i) CHECK((r.points[i] + r.origin_shift - (b.points[i] + b.origin_shift)).norm() < 1e-12);
}

TEST_CASE("epoch series validation") {
  using namespace std::chrono;
  std::vector<EpochRecord> e{{"I", 2013y / March / 14, 3}, {"II", 2013y / August / 17, 2}};
  validate_epochs(e);
  e[1].acquisition_date = 2013y / March / 14;
  CHECK(code_of([&] { validate_epochs(e); }) == ErrorCode::Parameter);
  e[1].acquisition_date = 2013y / August / 17;
  e[1].station_count = 0;
  CHECK(code_of([&] { validate_epochs(e); }) == ErrorCode::Parameter);
}

TEST_CASE("normals on planes") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5, 5);
  PointCloud flat;
  for (int i = 0; i < 400; ++i) flat.points.emplace_back(u(rng), u(rng), 0.0);
  const auto n0 = estimate_normals(flat, 10, Point3(0, 0, 10));
  for (const auto& n : *n0.normals) CHECK((n - Point3::UnitZ()).norm() < 1e-6);

  // Generic orientation; viewpoint on the negative side flips the sign.
  const Point3 normal = Point3(0.3, -0.5, 0.8).normalized();
  const auto [e1, e2] = plane_basis(normal);
  PointCloud tilted;
  for (int i = 0; i < 400; ++i) tilted.points.push_back(Point3(1, 2, 3) + u(rng) * e1 + u(rng) * e2);
  const Point3 view = Point3(1, 2, 3) - 20 * normal;
  const auto nt = estimate_normals(tilted, 12, view);
  for (std::size_t i = 0; i < tilted.size(); ++i) {
    const auto& n = (*nt.normals)[i];
    CHECK(std::abs(n.norm() - 1) < 1e-6);
    CHECK((n + normal).norm() < 1e-6);
    CHECK(n.dot(view - tilted.points[i]) >= 0);
  }
  CHECK(nt.scalars.count("curvature") == 1);

  CHECK(code_of([&] { estimate_normals(flat, 2, Point3::Zero()); }) == ErrorCode::Parameter);
}

TEST_CASE("normal orientation property on a rough surface") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3), h(-0.3, 0.3);
  PointCloud c;
  for (int i = 0; i < 600; ++i) c.points.emplace_back(u(rng), u(rng), h(rng));
  const Point3 view(2, -7, 4);
  const auto out = estimate_normals(c, 8, view);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(*out.normal_valid)[i]) continue;
    const auto& n = (*out.normals)[i];
    CHECK(std::abs(n.norm() - 1) < 1e-6);
    CHECK(n.dot(view - c.points[i]) >= 0);
  }
}

TEST_CASE("collinear neighbourhoods are flagged") {
  PointCloud line;
  for (int i = 0; i < 20; ++i) line.points.emplace_back(0.1 * i, 0.2 * i, 0.0);
  const auto out = estimate_normals(line, 5, Point3(0, 0, 10));
  for (auto v : *out.normal_valid) CHECK(v == 0);
}

TEST_CASE("voxel downsampling") {
  PointCloud cube;
  for (int c = 0; c < 8; ++c) cube.points.emplace_back(c & 1, (c >> 1) & 1, (c >> 2) & 1);
  const auto one = voxel_downsample(cube, 10.0);
  REQUIRE(one.size() == 1);
  CHECK((one.points[0] - Point3(0.5, 0.5, 0.5)).norm() < 1e-15);

  PointCloud sparse;
  for (int i = 0; i < 10; ++i) sparse.points.emplace_back(3.0 * i + 0.5, 0.5, 0.5);
  CHECK(voxel_downsample(sparse, 1.0).size() == sparse.size());

  const auto rc = random_cloud(3000, 17, 4.0);
  const double cell = 0.7;
  const auto ds = voxel_downsample(rc, cell);
  // Oracle: direct grouping by floored cell coordinates.
  std::map<std::array<long, 3>, std::pair<Point3, int>> groups;
  for (const auto& p : rc.points) {
    const std::array<long, 3> key{static_cast<long>(std::floor(p.x() / cell)), static_cast<long>(std::floor(p.y() / cell)),
                                  static_cast<long>(std::floor(p.z() / cell))};
    auto& g = groups.try_emplace(key, Point3::Zero(), 0).first->second;
    g.first += p;
    ++g.second;
  }
  REQUIRE(ds.size() == groups.size());
  for (const auto& p : ds.points) {
    const std::array<long, 3> key{static_cast<long>(std::floor(p.x() / cell)), static_cast<long>(std::floor(p.y() / cell)),
                                  static_cast<long>(std::floor(p.z() / cell))};
    const auto& g = groups.at(key);
    CHECK((p - g.first / g.second).norm() < 1e-12);
  }

  const auto again = voxel_downsample(ds, cell);
  REQUIRE(again.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(again.points[i] == ds.points[i]);
  CHECK(code_of([&] { voxel_downsample(rc, 0.0); }) == ErrorCode::Parameter);
}

TEST_CASE("plane fit and basis") {
  std::vector<Point3> pts{{0, 0, 2}, {1, 0, 2}, {0, 1, 2}, {1, 1, 2}};
  const auto f = fit_plane(pts);
  CHECK(f.plane.normal == Point3::UnitZ());
  CHECK(f.plane.offset == doctest::Approx(2.0));
  const Point3 n = Point3(1, 2, 2).normalized();
  const auto [a, b] = plane_basis(n);
  CHECK(std::abs(a.dot(n)) < 1e-12);
  CHECK(std::abs(a.dot(b)) < 1e-12);
  CHECK((a.cross(b) - n).norm() < 1e-12);
}

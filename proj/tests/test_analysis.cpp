#include "doctest.h"

#include "tlsmon/analysis.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

using namespace tlsmon;
using namespace std::chrono;

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

// Rectangle of vertices (spacing 0.5) on the z=0 plane rotated by `rot_deg`,
// with in-plane motion along the long (20 m) axis.
struct RectScene {
  TriangleMesh mesh;
  DeformationField field;
  Region region;
};

RectScene rect_scene(double rot_deg, bool with_motion) {
  RectScene s;
  s.mesh.projection_plane = Plane{};
  const double r = rot_deg * std::numbers::pi / 180;
  const Eigen::Matrix2d R{{std::cos(r), -std::sin(r)}, {std::sin(r), std::cos(r)}};
  const auto [e1, e2] = plane_basis(Point3::UnitZ());
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 40; ++j) {
      // across = 10 m along e1, along = 20 m along e2 (before rotation)
      const Eigen::Vector2d q = R * Eigen::Vector2d(0.5 * i, 0.5 * j);
      s.mesh.vertices.push_back(q.x() * e1 + q.y() * e2);
      const Eigen::Vector2d m = R * Eigen::Vector2d(0, 1);
      s.field.offsets.push_back(with_motion ? Point3(0.3 * (m.x() * e1 + m.y() * e2) + 0.1 * Point3::UnitZ())
                                            : Point3::Zero());
      s.field.values.push_back(with_motion ? 0.3 : 0.0);
      s.field.valid.push_back(1);
      s.region.vertex_set.push_back(s.region.vertex_set.size());
    }
  }
  s.region.id = 1;
  return s;
}

}  // namespace

TEST_CASE("region extent on an axis-aligned rectangle") {
  const auto s = rect_scene(0, true);
  const auto m = region_extent(s.region, s.field, s.mesh);
  CHECK(m.W_m == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(m.L_m == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_FALSE(m.motion_from_slope);
  CHECK(m.theta_deg > 45);
}

TEST_CASE("region extent is invariant under in-plane rotation") {
  for (double rot : {37.0, -81.0, 190.0}) {
    const auto s = rect_scene(rot, true);
    const auto m = region_extent(s.region, s.field, s.mesh);
    CHECK(std::abs(m.W_m - 10.0) < 1e-6);
    CHECK(std::abs(m.L_m - 20.0) < 1e-6);
  }
}

TEST_CASE("zero motion on a horizontal plane is undefined") {
  const auto s = rect_scene(0, false);
  CHECK(code_of([&] { region_extent(s.region, s.field, s.mesh); }) == ErrorCode::UndefinedMotionVector);
}

TEST_CASE("pure normal motion falls back to the slope direction") {
  auto s = rect_scene(0, false);
  // Tilt the plane about x by 30 degrees.
  const double t = 30 * std::numbers::pi / 180;
  const Eigen::Matrix3d R = Eigen::AngleAxisd(t, Point3::UnitX()).toRotationMatrix();
  for (auto& v : s.mesh.vertices) v = R * v;
  s.mesh.projection_plane.normal = R * Point3::UnitZ();
  for (std::size_t i = 0; i < s.field.values.size(); ++i) {
    s.field.values[i] = -0.4;
    s.field.offsets[i] = -0.4 * s.mesh.projection_plane.normal;
  }
  const auto m = region_extent(s.region, s.field, s.mesh);
  CHECK(m.motion_from_slope);
  const auto [e1, e2] = plane_basis(s.mesh.projection_plane.normal);
  const Point3 down = m.motion_vector.x() * e1 + m.motion_vector.y() * e2;
  CHECK(down.z() < 0);
  CHECK(std::abs(down.x()) < 1e-9);
}

TEST_CASE("azimuth override") {
  const auto s = rect_scene(0, true);
  const auto [e1, e2] = plane_basis(Point3::UnitZ());
  // Pick the compass azimuth of the rectangle's short axis (e1).
  const double az = std::atan2(e1.x(), e1.y()) * 180 / std::numbers::pi;
  const auto m = region_extent(s.region, s.field, s.mesh, {.motion_azimuth_deg = az});
  CHECK(m.L_m == doctest::Approx(10.0));
  CHECK(m.W_m == doctest::Approx(20.0));
}

TEST_CASE("shape angle") {
  CHECK(shape_angle(3, 3) == doctest::Approx(45.0));
  CHECK(std::abs(shape_angle(31.1, 56.0) - 60.95) < 0.05);
  CHECK(std::abs(shape_angle(16.4, 44.8) - 69.89) < 0.05);
  CHECK_THROWS_AS(shape_angle(0, 1), Error);
  CHECK_THROWS_AS(shape_angle(1, -1), Error);
}

TEST_CASE("classification of the published area rows") {
  const std::vector<std::tuple<double, double, ShapeClass>> rows{{31.1, 56.0, ShapeClass::L},
                                                                  {9.9, 16.5, ShapeClass::L},
                                                                  {16.4, 44.8, ShapeClass::VL},
                                                                  {20.9, 32.1, ShapeClass::L},
                                                                  {24.3, 52.1, ShapeClass::L}};
  for (const auto& [w, l, c] : rows) CHECK(classify_shape(shape_angle(w, l)) == c);
}

TEST_CASE("classification boundaries are lower-inclusive") {
  CHECK(classify_shape(45.0) == ShapeClass::L);
  CHECK(classify_shape(67.5) == ShapeClass::VL);
  CHECK(classify_shape(22.5) == ShapeClass::W);
  CHECK(classify_shape(std::nextafter(22.5, 0.0)) == ShapeClass::VW);
  CHECK(classify_shape(std::nextafter(45.0, 0.0)) == ShapeClass::W);
  CHECK(classify_shape(std::nextafter(90.0, 0.0)) == ShapeClass::VL);
  CHECK(classify_shape(1e-9) == ShapeClass::VW);
  CHECK_THROWS_AS(classify_shape(0.0), Error);
  CHECK_THROWS_AS(classify_shape(90.0), Error);
  CHECK_THROWS_AS(classify_shape(std::nan("")), Error);
}

TEST_CASE("classification properties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 100.0), k(0.001, 1000.0), th(0.0, 90.0);
  for (int i = 0; i < 2000; ++i) {
    const double w = u(rng), l = u(rng), s = k(rng);
    const auto c = classify_shape(shape_angle(w, l));
    if (l > w) CHECK((c == ShapeClass::L || c == ShapeClass::VL));
    if (l < w) CHECK((c == ShapeClass::W || c == ShapeClass::VW));
    // Scale invariance, away from float ties at the boundaries.
    const double t = shape_angle(w, l);
    if (std::min({std::abs(t - 22.5), std::abs(t - 45.0), std::abs(t - 67.5)}) > 1e-9) {
      CHECK(classify_shape(shape_angle(s * w, s * l)) == c);
    }
    // Exactly one interval holds.
    const double t2 = th(rng);
    if (t2 <= 0) continue;
    const int hits = (t2 >= 67.5 && t2 < 90) + (t2 >= 45 && t2 < 67.5) + (t2 >= 22.5 && t2 < 45) + (t2 > 0 && t2 < 22.5);
    CHECK(hits == 1);
    CHECK_NOTHROW(classify_shape(t2));
  }
}

TEST_CASE("error budget") {
  CHECK(std::abs(error_budget(6, 30, 60, 10, 10) - 76.0) < 0.05);
  CHECK(error_budget(0, 0, 60, 0, 0) == 60.0);
  CHECK(ErrorBudget{}.sigma_mm() == error_budget(6, 30, 60, 10, 10));
  CHECK_THROWS_AS(error_budget(-1, 0, 0, 0, 0), Error);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng);
    const double direct = std::sqrt(2 * a * a + 2 * b * b + c * c + 2 * d * d + e * e);
    const double s = error_budget(a, b, c, d, e);
    CHECK(s == doctest::Approx(direct).epsilon(1e-14));
    // sigma dominates every weighted component and grows with each one.
    ErrorBudget eb{a, b, c, d, e};
    const auto comp = eb.components();
    for (int j = 0; j < 5; ++j) CHECK(s >= std::sqrt(eb.multiplicities[j]) * comp[j] - 1e-12);
    CHECK(error_budget(a + 1, b, c, d, e) >= s);
    CHECK(error_budget(a, b, c, d, e + 1) >= s);
  }
}

TEST_CASE("relative error") {
  CHECK(relative_error(76, 10) == doctest::Approx(0.0076));
  CHECK(relative_error(76, 2) == doctest::Approx(0.038));
  CHECK(relative_error(0, 2) == 0.0);
  CHECK_THROWS_AS(relative_error(76, 0), Error);
  CHECK_THROWS_AS(relative_error(76, -1), Error);
}

TEST_CASE("interval days from acquisition dates") {
  const std::vector<std::string> dates{"2013-03-14", "2013-08-17", "2013-11-06", "2014-09-13", "2015-01-09"};
  const std::vector<int> expected{156, 81, 311, 118};
  int total = 0;
  for (std::size_t i = 0; i + 1 < dates.size(); ++i) {
    const int d = interval_days(parse_date(dates[i]), parse_date(dates[i + 1]));
    CHECK(d == expected[i]);
    total += d;
  }
  CHECK(interval_days(parse_date(dates.front()), parse_date(dates.back())) == total);
  CHECK(interval_days(parse_date("2013.03.14"), parse_date("2013.08.17")) == 156);
  CHECK(interval_days(parse_date("2016-02-28"), parse_date("2016-03-01")) == 2);
  CHECK(interval_days(parse_date("2015-02-28"), parse_date("2015-03-01")) == 1);
  CHECK_THROWS_AS(interval_days(parse_date("2014-01-01"), parse_date("2014-01-01")), Error);
  CHECK_THROWS_AS(interval_days(parse_date("2014-01-02"), parse_date("2014-01-01")), Error);
  CHECK(code_of([] { parse_date("2014-02-30"); }) == ErrorCode::Parse);
  CHECK(code_of([] { parse_date("14-02-03"); }) == ErrorCode::Parse);
  CHECK(code_of([] { parse_date("2014-02-03x"); }) == ErrorCode::Parse);
  CHECK(format_date(parse_date("2013.03.14")) == "2013-03-14");
}

TEST_CASE("report") {
  SUBCASE("empty inputs") {
    const auto r = build_report({}, {}, {}, {}, {}, ErrorBudget{});
    const auto doc = report_to_json(r);
    CHECK(doc.at("regions").empty());
    CHECK(doc.at("deformation").empty());
    CHECK(report_from_json(doc) == r);
  }
  SUBCASE("annotated region row") {
    Region reg;
    reg.id = 1;
    reg.volume_m3 = 648.2;
    reg.area_m2 = 1200;
    ShapeMeasure sh;
    sh.region_id = 1;
    sh.W_m = 31.1;
    sh.L_m = 56.0;
    sh.theta_deg = shape_angle(31.1, 56.0);
    DeformationField f;
    f.values = {0.1, 0.3, 9.0};
    f.valid = {1, 1, 0};
    f.interval_days = 311;
    f.compared_epoch = "IV";
    f.reference_epoch = "III";
    const std::vector<EpochRecord> epochs{{"III", parse_date("2013-11-06"), 5}, {"IV", parse_date("2014-09-13"), 2}};
    const auto r = build_report(epochs, {f}, {reg}, {sh}, {{1, CrudenType::RS}}, ErrorBudget{},
                                {{"threshold_mm_day", 2.0}});
    REQUIRE(r.regions.size() == 1);
    CHECK(r.regions[0].type() == "L-RS");
    CHECK(r.deformation[0].mean_m == doctest::Approx(0.2));
    CHECK(r.deformation[0].valid_count == 2);
    CHECK(r.deformation[0].unmasked_count == 3);
    const auto text = render_report_text(r);
    CHECK(text.find("648.2") != std::string::npos);
    CHECK(text.find("L-RS") != std::string::npos);
    CHECK(text.find("sigma 76.0 mm") != std::string::npos);
    const auto back = report_from_json(nlohmann::json::parse(write_report(r)));
    CHECK(back == r);
    CHECK(write_report(back) == write_report(r));
  }
  SUBCASE("id mismatch") {
    Region reg;
    reg.id = 2;
    ShapeMeasure sh;
    sh.region_id = 3;
    sh.W_m = sh.L_m = 1;
    sh.theta_deg = 45;
    CHECK(code_of([&] { build_report({}, {}, {reg}, {sh}, {}, ErrorBudget{}); }) == ErrorCode::IdMismatch);
    sh.region_id = 2;
    CHECK(code_of([&] { build_report({}, {}, {reg}, {sh}, {{7, CrudenType::FL}}, ErrorBudget{}); }) ==
          ErrorCode::IdMismatch);
    CHECK(code_of([&] { build_report({}, {}, {reg}, {}, {}, ErrorBudget{}); }) == ErrorCode::IdMismatch);
  }
}

TEST_CASE("enum names round trip") {
  for (auto c : {ShapeClass::VL, ShapeClass::L, ShapeClass::W, ShapeClass::VW}) CHECK(parse_shape_class(to_string(c)) == c);
  for (auto t : {CrudenType::FA, CrudenType::TO, CrudenType::S, CrudenType::SP, CrudenType::FL, CrudenType::RS,
                 CrudenType::TS}) {
    CHECK(parse_cruden_type(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_cruden_type("XX"), Error);
}

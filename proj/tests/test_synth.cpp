#include "doctest.h"

#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"
#include "tlsmon/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

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

TerrainParams params(std::uint64_t seed = 1) {
  TerrainParams t;
  t.extent = {30.0, 20.0};
  t.mean_slope_deg = 60.0;
  t.roughness = 0.5;
  t.density = 10.0;
  t.seed = seed;
  return t;
}

// Taper profile 0.5 (1 + cos(pi (s + t/2) / t)) has a symmetric derivative
// with variance t^2 (1/4 - 2/pi^2); the volume is E[A(s)] over that density.
double taper_variance(double t) { return t * t * (0.25 - 2.0 / (std::numbers::pi * std::numbers::pi)); }

}  // namespace

TEST_CASE("terrain sample count and placement") {
  const TerrainModel model(params());
  const auto s = gen_terrain(model);
  CHECK(s.cloud.size() == 6000);
  CHECK(s.truth.ground_labels.size() == 6000);
  CHECK(std::all_of(s.truth.true_displacement.begin(), s.truth.true_displacement.end(), [](double d) { return d == 0; }));
  for (const auto& p : s.cloud.points) {
    const Point3 l = model.to_local(p);
    CHECK(std::abs(l.x()) <= 15.0 + 1e-9);
    CHECK(std::abs(l.y()) <= 10.0 + 1e-9);
    CHECK(l.z() == doctest::Approx(model.height(l.x(), l.y())).epsilon(1e-9));
  }
}

TEST_CASE("base frame geometry") {
  const TerrainModel model(params());
  CHECK(model.eu().dot(model.ev()) == doctest::Approx(0.0));
  CHECK((model.eu().cross(model.ev()) - model.ew()).norm() < 1e-12);
  // Up-slope axis rises at the mean slope.
  CHECK(std::asin(model.ev().z()) * 180 / std::numbers::pi == doctest::Approx(60.0));
  CHECK(model.ev().y() > 0);
}

TEST_CASE("zero roughness is the inclined plane") {
  auto p = params();
  p.roughness = 0.0;
  const TerrainModel model(p);
  const auto s = gen_terrain(model);
  const auto fit = fit_plane(s.cloud.points);
  CHECK(fit.eigenvalues[0] < 1e-20);
  CHECK(std::abs(fit.plane.normal.dot(model.ew())) == doctest::Approx(1.0));
}

TEST_CASE("determinism and seed sensitivity") {
  const auto a = gen_terrain(params(3)), b = gen_terrain(params(3)), c = gen_terrain(params(4));
  CHECK(a.cloud.points == b.cloud.points);
  CHECK(a.cloud.points != c.cloud.points);
  auto resampled = params(3);
  resampled.sample_seed = 99;
  const TerrainModel m3(params(3)), mr(resampled);
  CHECK(m3.height(1.0, 2.0) == mr.height(1.0, 2.0));  // same surface
  CHECK(gen_terrain(mr).cloud.points != a.cloud.points);
}

TEST_CASE("vegetation share and height") {
  const TerrainModel model(params(5));
  const auto ground = gen_terrain(model);
  VegetationParams vp;
  vp.coverage = 0.2;
  const auto s = add_vegetation(ground, model, vp);
  const auto veg = std::count(s.truth.ground_labels.begin(), s.truth.ground_labels.end(), Label::Vegetation);
  CHECK(static_cast<double>(veg) / static_cast<double>(s.cloud.size()) == doctest::Approx(0.2).epsilon(1e-3));
  CHECK(*s.cloud.labels == s.truth.ground_labels);
  for (std::size_t i = ground.cloud.size(); i < s.cloud.size(); ++i) {
    const Point3 l = model.to_local(s.cloud.points[i]);
    const double above = l.z() - model.height(l.x(), l.y());
    CHECK(above > 0.0);
    CHECK(above <= vp.height_range.y() + 1e-9);
  }
  vp.coverage = 1.0;
  CHECK(code_of([&] { add_vegetation(ground, model, vp); }) == ErrorCode::Parameter);
}

TEST_CASE("landslide volume") {
  const TerrainModel model(params(6));
  SUBCASE("rectangle") {
    RegionSpec r;
    r.shape = RegionShape::Rectangle;
    r.radius_along = r.radius_across = 10.0;
    r.depth_m = 0.5;
    r.taper_m = 1.0;
    // Inside the corner the level sets are squares, outside they are rounded.
    const double expect = 0.5 * (400.0 + 0.5 * (4.0 + std::numbers::pi) * taper_variance(1.0));
    CHECK(landslide_volume(model, r) == doctest::Approx(expect).epsilon(1e-4));
    r.taper_m = 0.0;
    CHECK(landslide_volume(model, r) == doctest::Approx(200.0).epsilon(1e-3));
  }
  SUBCASE("ellipse") {
    RegionSpec r;
    r.radius_along = 6.0;
    r.radius_across = 4.0;
    r.depth_m = -0.3;
    r.taper_m = 1.5;
    r.azimuth_deg = 200.0;
    const double m = 4.0;
    const double expect = 0.3 * std::numbers::pi * 24.0 * (1.0 + taper_variance(1.5) / (m * m));
    CHECK(landslide_volume(model, r) == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("landslide displaces along the local normal") {
  const TerrainModel model(params(7));
  const auto base = gen_terrain(model);
  RegionSpec r;
  r.radius_along = r.radius_across = 5.0;
  r.depth_m = 0.4;
  const auto moved = apply_landslide(base, model, r);
  REQUIRE(moved.cloud.size() == base.cloud.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < base.cloud.size(); ++i) {
    const Point3 l = model.to_local(base.cloud.points[i]);
    const Point3 d = moved.cloud.points[i] - base.cloud.points[i];
    const double w = region_weight(model, r, l.x(), l.y());
    CHECK(moved.truth.true_displacement[i] == doctest::Approx(0.4 * w));
    CHECK((d - 0.4 * w * model.normal(l.x(), l.y())).norm() < 1e-12);
    inside += w == 1.0;
  }
  CHECK(inside > 0);
}

TEST_CASE("station simulation") {
  const auto s = gen_terrain(params(8));
  const auto pose = RigidTransform::from_axis_angle(Point3(0, 0, 1), 0.4, Point3(3, -40, 5));
  SUBCASE("noise-free views are exact") {
    StationParams sp;
    sp.noise_sigma = 0.0;
    const auto views = simulate_stations(s.cloud, {pose}, sp);
    REQUIRE(views[0].size() == s.cloud.size());
    for (std::size_t i = 0; i < views[0].size(); ++i) {
      const auto src = static_cast<std::size_t>(views[0].scalars.at("source_index")[i]);
      CHECK((pose.apply(views[0].points[i]) - s.cloud.points[src]).norm() < 1e-9);
    }
  }
  SUBCASE("noise has the requested spread") {
    StationParams sp;
    sp.noise_sigma = 0.01;
    const auto v = simulate_stations(s.cloud, {pose}, sp)[0];
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point3 d = pose.apply(v.points[i]) - s.cloud.points[static_cast<std::size_t>(v.scalars.at("source_index")[i])];
      for (int k = 0; k < 3; ++k) {
        sum += d[k];
        sq += d[k] * d[k];
        ++n;
      }
    }
    const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 5e-4);
    CHECK(sd == doctest::Approx(0.01).epsilon(0.03));
  }
  SUBCASE("range limit and occlusion only remove points") {
    StationParams sp;
    sp.max_range = 30.0;
    sp.occlusion = true;
    sp.noise_sigma = 0.0;
    const auto v = simulate_stations(s.cloud, {pose}, sp)[0];
    CHECK(v.size() < s.cloud.size());
    for (const auto& p : v.points) CHECK(p.norm() <= 30.0 + 1e-9);
  }
  CHECK(code_of([&] { simulate_stations(s.cloud, {}, StationParams{}); }) == ErrorCode::Parameter);
}

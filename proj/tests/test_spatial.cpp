#include "doctest.h"

#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/error.hpp"
#include "tlsmon/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace tlsmon;

namespace {

std::vector<Neighbor> brute_knn(const std::vector<Point3>& pts, const Point3& q, std::size_t k) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.push_back({i, (pts[i] - q).norm()});
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace

TEST_CASE("k nearest agrees with exhaustive search") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point3> pts(1000);
  for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
  const SpatialIndex index(pts);
  for (int q = 0; q < 100; ++q) {
    const Point3 query(u(rng), u(rng), u(rng));
    CHECK(nearest_neighbors(index, query, 5) == brute_knn(pts, query, 5));
    CHECK(index.nearest_one(query) == brute_knn(pts, query, 1).front());
  }
}

TEST_CASE("randomised trials including duplicates and ties") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> grid(0, 6);  // lattice points force exact ties
    std::vector<Point3> pts(300);
    for (auto& p : pts) p = Point3(grid(rng), grid(rng), grid(rng)) * 0.5;
    const SpatialIndex index(pts);
    for (int q = 0; q < 20; ++q) {
      const Point3 query(grid(rng) * 0.5, grid(rng) * 0.25, grid(rng) * 0.5);
      const std::size_t k = 1 + static_cast<std::size_t>(q % 9);
      CHECK(index.nearest(query, k) == brute_knn(pts, query, k));
      const double r = 0.3 * (q % 5);
      auto within = index.within_radius(query, r);
      auto expect = brute_knn(pts, query, pts.size());
      expect.erase(std::remove_if(expect.begin(), expect.end(), [&](const Neighbor& n) { return n.distance > r; }),
                   expect.end());
      CHECK(within == expect);
      std::vector<std::uint32_t> unordered;
      index.within_radius_unordered(query, r, unordered);
      std::sort(unordered.begin(), unordered.end());
      std::vector<std::uint32_t> ids;
      for (const auto& n : expect) ids.push_back(static_cast<std::uint32_t>(n.index));
      std::sort(ids.begin(), ids.end());
      CHECK(unordered == ids);
    }
  }
}

TEST_CASE("capped nearest agrees with the uncapped query") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point3> pts(2000);
  for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
  const SpatialIndex index(pts);
  for (int q = 0; q < 300; ++q) {
    const Point3 query = Point3(u(rng), u(rng), u(rng)) * 3.0 - Point3::Ones();
    const auto best = index.nearest_one(query);
    for (double cap : {0.0, 0.02, 0.1, 0.5, std::numeric_limits<double>::infinity()}) {
      const auto got = index.nearest_within(query, cap);
      if (best.distance <= cap) {
        REQUIRE(got);
        CHECK(*got == best);
      } else {
        CHECK(!got);
      }
    }
    const auto at_cap = index.nearest_within(query, best.distance);  // inclusive
    REQUIRE(at_cap);
    CHECK(*at_cap == best);
  }
}

TEST_CASE("query edge cases") {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const SpatialIndex index(pts);
  const auto self = index.nearest(pts[1], 1);
  CHECK(self.front().index == 1);
  CHECK(self.front().distance == 0.0);
  const auto all = index.nearest(Point3(2.2, 0, 0), 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0].index == 2);
  CHECK(all[2].index == 0);

  const SpatialIndex empty(std::vector<Point3>{});
  try {
    empty.nearest(Point3::Zero(), 1);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
  CHECK_THROWS_AS(index.nearest(Point3::Zero(), 0), Error);
}

TEST_CASE("median spacing of a lattice") {
  std::vector<Point3> pts;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) pts.emplace_back(0.2 * i, 0.2 * j, 0.0);
  }
  CHECK(median_spacing(SpatialIndex(pts)) == doctest::Approx(0.2).epsilon(1e-9));
}

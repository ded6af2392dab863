// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only N]... [--expect-fail N]... [--work DIR]
//
// Exit status is non-zero when a criterion fails that was not listed with
// --expect-fail, or when a listed one unexpectedly passes.

#include "tlsmon/analysis.hpp"
#include "tlsmon/bench.hpp"
#include "tlsmon/cloud_io.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/deformation.hpp"
#include "tlsmon/ground_filter.hpp"
#include "tlsmon/multiview.hpp"
#include "tlsmon/pipeline.hpp"
#include "tlsmon/synth.hpp"
#include "tlsmon/terrain.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace tlsmon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome budget_criterion() {
  const double sigma = error_budget(6, 30, 60, 10, 10);
  const bool printed = fmt("%.1f", sigma) == "76.0";
  return {std::abs(sigma - 76.0) <= 0.05 && printed, fmt("sigma = %.4f mm", sigma)};
}

Outcome shape_criterion() {
  struct Row {
    double W, L;
    ShapeClass expected;
  };
  const std::vector<Row> rows{{31.1, 56.0, ShapeClass::L},
                              {9.9, 16.5, ShapeClass::L},
                              {16.4, 44.8, ShapeClass::VL},
                              {20.9, 32.1, ShapeClass::L},
                              {24.3, 52.1, ShapeClass::L}};
  bool ok = true;
  std::string got;
  for (const auto& r : rows) {
    const auto c = classify_shape(shape_angle(r.W, r.L));
    ok &= c == r.expected;
    got += std::string(got.empty() ? "" : " ") + std::string(to_string(c));
  }
  return {ok, "classes " + got};
}

Outcome relative_error_criterion() {
  const double a = 100.0 * relative_error(76.0, 2.0), b = 100.0 * relative_error(76.0, 10.0);
  const bool ok = std::abs(a - 3.8) < 1e-9 && std::abs(b - 0.76) < 1e-9 && std::round(a) == 4.0 &&
                  std::round(b * 10) / 10 == 0.8;
  return {ok, fmt("%.2f%% and %.2f%%", a, b)};
}

Outcome interval_criterion() {
  const std::vector<std::string> dates{"2013-03-14", "2013-08-17", "2013-11-06", "2014-09-13", "2015-01-09"};
  const std::vector<int> expected{156, 81, 311, 118};
  std::vector<int> got;
  for (std::size_t i = 1; i < dates.size(); ++i) got.push_back(interval_days(parse_date(dates[i - 1]), parse_date(dates[i])));
  return {got == expected, fmt("%d %d %d %d days", got[0], got[1], got[2], got[3])};
}

Outcome registration_criterion() {
  // 20 noise-free pairs inside the ICP basin.
  BenchConfig basin;
  basin.trials = 20;
  basin.seed = 2024;
  basin.suites = {default_bench_suites()[0]};
  basin.methods = {"icp"};
  const auto b = run_table2_benchmark(basin);
  int recovered = 0;
  double worst = 0.0;
  std::size_t points = 0;
  for (const auto& t : b.trials) {
    const double rel = t.pose_rmse / t.diameter;
    worst = std::isfinite(rel) ? std::max(worst, rel) : INFINITY;
    recovered += rel < 1e-3;
  }
  {
    const auto sample = gen_terrain(basin.terrain);
    points = sample.cloud.size();
  }

  // Hybrid against ICP on every suite.
  BenchConfig cmp;
  cmp.trials = 6;
  cmp.seed = 2025;
  cmp.methods = {"icp", "hybrid"};
  const auto c = run_table2_benchmark(cmp);
  bool not_worse = true, strictly_better = false;
  std::string rates;
  for (const auto& suite : cmp.suites) {
    const auto& icp = c.row(suite.name, "icp");
    const auto& hybrid = c.row(suite.name, "hybrid");
    not_worse &= hybrid.success_rate >= icp.success_rate;
    strictly_better |= hybrid.success_rate > icp.success_rate;
    rates += fmt("; %s icp %d/%d hybrid %d/%d", suite.name.c_str(), icp.successes, icp.trials, hybrid.successes,
                 hybrid.trials);
  }
  const bool ok = recovered == 20 && not_worse && strictly_better && points <= 100000;
  return {ok, fmt("basin %d/20 below 1e-3 D (worst %.2e D, %zu points)", recovered, worst, points) + rates};
}

Outcome multiview_criterion() {
  const auto config = example_landslide_config();
  const auto& site = *config.synthetic;
  const TerrainModel model(synthetic_epoch_terrain(site, config.rng_seed, 0));
  auto scene = gen_terrain(model);
  if (site.vegetation) scene = add_vegetation(scene, model, *site.vegetation);
  auto sp = site.stations;
  sp.noise_sigma = 0.006;
  sp.seed = synthetic_noise_seed(config.rng_seed, 0);
  const auto& poses = site.epochs[0].station_poses;
  const auto views = simulate_stations(scene.cloud, poses, sp);
  const auto r = register_multiview(views, config.multiview);

  // Overlap: points whose true position lies within 0.3 m of another station's points.
  std::vector<SpatialIndex> scene_index;
  for (std::size_t s = 0; s < views.size(); ++s) {
    std::vector<Point3> pts;
    for (const auto& p : views[s].points) pts.push_back(poses[s].apply(p));
    scene_index.emplace_back(std::move(pts));
  }
  double worst = 0.0;
  std::string detail;
  for (std::size_t i = 1; i < views.size(); ++i) {
    const auto truth = poses[0].inverse() * poses[i];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < views[i].size(); ++k) {
      const Point3 world = poses[i].apply(views[i].points[k]);
      bool shared = false;
      for (std::size_t s = 0; s < views.size() && !shared; ++s) {
        shared = s != i && scene_index[s].nearest_one(world).distance <= 0.3;
      }
      if (!shared) continue;
      sum += (r.transforms[i].apply(views[i].points[k]) - truth.apply(views[i].points[k])).squaredNorm();
      ++n;
    }
    const double rmse = n ? std::sqrt(sum / static_cast<double>(n)) : INFINITY;
    worst = std::max(worst, rmse);
    detail += fmt("%sstation %zu %.1f mm over %zu points", detail.empty() ? "" : ", ", i, 1000 * rmse, n);
  }
  return {views.size() == 3 && worst < 0.012, detail};
}

Outcome vegetation_criterion() {
  TerrainParams t;
  t.extent = {60.0, 60.0};
  t.mean_slope_deg = 70.0;
  t.roughness = 1.0;
  t.density = 154.0;
  t.seed = 11;
  const TerrainModel model(t);
  VegetationParams vp;
  vp.coverage = 0.15;
  vp.seed = 12;
  const auto scene = add_vegetation(gen_terrain(model), model, vp);
  const auto r = filter_vegetation(scene.cloud);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) ok += r.labeling.labels[i] == scene.truth.ground_labels[i];
  const double acc = static_cast<double>(ok) / static_cast<double>(scene.cloud.size());
  return {acc >= 0.95 && scene.cloud.size() <= 1000000,
          fmt("accuracy %.2f%% over %zu points", 100 * acc, scene.cloud.size())};
}

Outcome dtm_criterion() {
  // Two parallel 70 degree planes 0.30 m apart, sampled independently.
  const double slope = 70.0 * std::numbers::pi / 180;
  const Point3 n(0, -std::sin(slope), std::cos(slope));
  const auto [e1, e2] = plane_basis(n);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20, 20);
  auto plane_cloud = [&](double offset) {
    PointCloud c;
    for (int i = 0; i < 20000; ++i) c.points.push_back(Point3(0, 30, 20) + u(rng) * e1 + u(rng) * e2 + offset * n);
    return c;
  };
  DtmParams dp;
  dp.projection_plane = Plane{n, n.dot(Point3(0, 30, 20))};
  const auto ref = build_dtm(plane_cloud(0.0), dp);
  const auto cmp = build_dtm(plane_cloud(0.30), dp);
  const auto field = mesh_distance(cmp, ref, MeshDistanceParams{}, 180.0);
  const auto stats = field_stats(field);
  const bool planes_ok = std::abs(stats.mean - 0.300) <= 1e-6 && stats.std < 1e-9;

  // Unchanged terrain whose reference has an occlusion hole.
  TerrainParams t;
  t.extent = {40.0, 40.0};
  t.mean_slope_deg = 60.0;
  t.density = 20.0;
  t.seed = 9;
  const TerrainModel model(t);
  auto first = gen_terrain(model).cloud;
  t.sample_seed = 77;
  const auto second = gen_terrain(TerrainModel(t)).cloud;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const Point3 l = model.to_local(first.points[i]);
    if (std::hypot(l.x() - 4.0, l.y() + 3.0) > 6.0) keep.push_back(i);
  }
  const auto holed = build_dtm(select(first, keep), DtmParams{.projection_plane = fit_plane(first.points).plane});
  const auto full = build_dtm(second, DtmParams{.projection_plane = fit_plane(first.points).plane});
  const auto masked = mesh_distance(full, holed, MeshDistanceParams{.max_dist = 0.5, .mask_border = true}, 180.0);
  const auto unmasked = mesh_distance(full, holed, MeshDistanceParams{.max_dist = INFINITY, .mask_border = false}, 180.0);
  const auto with_mask = significant_regions(full, rate_field(masked), 2.0, 1.0);
  const auto without_mask = significant_regions(full, rate_field(unmasked), 2.0, 1.0);
  const bool hole_ok = with_mask.empty() && !without_mask.empty();
  return {planes_ok && hole_ok, fmt("planes mean %.9f m std %.2e; hole regions %zu masked, %zu unmasked", stats.mean,
                                    stats.std, with_mask.size(), without_mask.size())};
}

struct EndToEnd {
  PipelineConfig config;
  std::optional<PipelineResult> result;
  std::string report_bytes;
};

EndToEnd& end_to_end(const fs::path& work) {
  static EndToEnd e2e;
  if (!e2e.result) {
    e2e.config = example_landslide_config();
    e2e.config.run_dir = (work / "landslide").string();
    fs::remove_all(e2e.config.run_dir);
    e2e.result = run_pipeline(e2e.config);
    e2e.report_bytes = read_file(fs::path(e2e.config.run_dir) / "report.json");
  }
  return e2e;
}

Outcome landslide_criterion(const fs::path& work) {
  auto& e2e = end_to_end(work);
  const auto& r = *e2e.result;
  const auto& site = *r.site;
  const auto& spec = site.epochs[1].landslides.at(0);
  const TerrainModel model(site.terrain);
  const double interval = r.fields.at(0).interval_days;
  std::string detail = fmt("interval %.0f days, %zu region(s)", interval, r.regions.size());
  if (r.regions.size() != 1) return {false, detail};

  const auto& region = r.regions[0];
  const auto& mesh = r.dtms[1];
  const auto& field = r.fields[0];
  const auto& pose = site.epochs[0].station_poses[0];  // scene frame of the reference epoch
  double measured = 0.0, truth = 0.0;
  std::size_t n = 0;
  for (auto v : region.vertex_set) {
    if (!field.valid[v]) continue;
    const Point3 l = model.to_local(pose.apply(mesh.vertices[v] + mesh.origin_shift));
    measured += std::abs(field.values[v]);
    truth += region_displacement(model, spec, l.x(), l.y()).norm();
    ++n;
  }
  measured /= static_cast<double>(n);
  truth /= static_cast<double>(n);
  const double volume_truth = landslide_volume(model, spec);
  const auto expected_class = classify_shape(shape_angle(2 * spec.radius_across, 2 * spec.radius_along));
  const auto& row = r.report.regions.at(0);

  const bool mean_ok = std::abs(measured - truth) <= 0.10 * truth;
  const bool volume_ok = std::abs(region.volume_m3 - volume_truth) <= 0.15 * volume_truth;
  const bool class_ok = row.shape_class == expected_class;
  detail += fmt("; mean %.3f m vs %.3f m (%+.1f%%) %s", measured, truth, 100 * (measured / truth - 1), mean_ok ? "ok" : "off");
  detail += fmt("; volume %.1f vs %.1f m3 (%+.1f%%) %s", region.volume_m3, volume_truth,
                100 * (region.volume_m3 / volume_truth - 1), volume_ok ? "ok" : "off");
  detail += fmt("; W %.2f L %.2f theta %.3f -> %s, constructed %s", row.W_m, row.L_m, row.theta_deg,
                std::string(to_string(row.shape_class)).c_str(), std::string(to_string(expected_class)).c_str());
  return {interval == 180.0 && mean_ok && volume_ok && class_ok, detail};
}

Outcome determinism_criterion(const fs::path& work) {
  auto& e2e = end_to_end(work);
  fs::remove_all(e2e.config.run_dir);
  run_pipeline(e2e.config);
  const auto again = read_file(fs::path(e2e.config.run_dir) / "report.json");
  return {again == e2e.report_bytes, fmt("report.json %zu bytes, %s", again.size(),
                                         again == e2e.report_bytes ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only, expect_fail;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--expect-fail", expect_fail, "criteria known not to pass");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  const fs::path work_dir(work);
  fs::create_directories(work_dir);

  const std::vector<Criterion> criteria{
      {1, "error budget", 1.0, budget_criterion},
      {2, "shape classes", 1.0, shape_criterion},
      {3, "relative error", 1.0, relative_error_criterion},
      {4, "epoch intervals", 1.0, interval_criterion},
      {5, "registration recovery", 120.0, registration_criterion},
      {6, "multi-view closure", 120.0, multiview_criterion},
      {7, "vegetation filtering", 60.0, vegetation_criterion},
      {8, "DTM differencing", 60.0, dtm_criterion},
      {9, "end-to-end landslide", 300.0, [&] { return landslide_criterion(work_dir); }},
      {10, "determinism", 300.0, [&] { return determinism_criterion(work_dir); }},
  };

  const std::set<int> selected(only.begin(), only.end()), expected(expect_fail.begin(), expect_fail.end());
  int passed = 0, run = 0, unexpected = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    ++run;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.budget_s) {
      out.pass = false;
      out.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    passed += out.pass;
    const bool known = expected.count(c.number) > 0;
    unexpected += out.pass == known;
    std::printf("%s %2d %-22s %7.2f s  %s%s\n", out.pass ? "PASS" : "FAIL", c.number, c.name.c_str(), secs,
                out.detail.c_str(), known ? (out.pass ? "  [listed as expected failure]" : "  [expected failure]") : "");
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", passed, run);
  return unexpected == 0 ? 0 : 1;
}

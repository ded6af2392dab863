#include "tlsmon/bench.hpp"

#include "tlsmon/error.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace tlsmon {
namespace {

struct Pair {
  PointCloud source;
  PointCloud target;
  RigidTransform truth;  // source frame -> target frame
  double diameter = 0.0;
  Point3 center = Point3::Zero();
};

Pair make_pair(const BenchConfig& config, const BenchSuite& suite, std::uint64_t seed) {
  TerrainParams tp = config.terrain;
  tp.seed = seed;
  tp.sample_seed = 0;
  const TerrainModel model(tp);
  Pair p;
  p.target = gen_terrain(model).cloud;

  Scene src;
  if (suite.resample) {
    TerrainParams sp = tp;
    sp.sample_seed = splitmix64(seed ^ 0x5bd1e995ULL);
    src = gen_terrain(TerrainModel(sp));
  } else {
    src = gen_terrain(model);
  }
  if (suite.local_change_fraction > 0) {
    RegionSpec r;
    r.center = {-tp.extent.x() / 6, tp.extent.y() / 12};
    const double area = tp.extent.x() * tp.extent.y() * suite.local_change_fraction;
    r.radius_along = r.radius_across = std::sqrt(area / std::numbers::pi);
    r.depth_m = suite.change_depth_m;
    src = apply_landslide(src, model, r);
  }
  p.source = std::move(src.cloud);
  p.source.labels.reset();
  p.target.labels.reset();
  p.diameter = diameter(p.target.points);
  p.center = centroid(p.target.points);

  std::mt19937_64 rng(splitmix64(seed + 2));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Point3 axis(0.2 * u(rng), 0.2 * u(rng), 1.0);
  Point3 t(u(rng), u(rng), u(rng));
  while (t.norm() < 1e-6) t = Point3(u(rng), u(rng), u(rng));
  t = t.normalized() * suite.translation_fraction * p.diameter;
  p.truth = RigidTransform::from_axis_angle(axis, suite.rotation_deg * std::numbers::pi / 180, t);
  p.source = transform_cloud(p.source, p.truth.inverse());

  if (suite.noise_sigma > 0) {
    std::normal_distribution<double> g(0.0, suite.noise_sigma);
    for (auto& q : p.source.points) q += Point3(g(rng), g(rng), g(rng));
  }
  return p;
}

RigidTransform run_method(const std::string& method, const Pair& p, const BenchConfig& config, const IcpParams& icp_params) {
  if (method == "icp") return icp(p.source, p.target, icp_params).transform;
  if (method == "coarse+icp") {
    const auto coarse = coarse_register(p.source, p.target, config.coarse);
    return icp(p.source, p.target, icp_params, coarse.transform).transform;
  }
  if (method == "hybrid") {
    HybridParams hp = config.hybrid;
    hp.icp = icp_params;
    return register_global_hybrid(p.source, p.target, hp).transform;
  }
  throw Error(ErrorCode::Parameter, "unknown registration method '" + method + "'");
}

}  // namespace

std::vector<BenchSuite> default_bench_suites() {
  BenchSuite basin;
  basin.name = "basin";
  BenchSuite large;
  large.name = "large";
  large.rotation_deg = 60.0;
  large.translation_fraction = 0.3;
  large.local_change_fraction = 0.3;
  large.resample = true;
  large.icp_max_pair_dist = 1.0;
  return {basin, large};
}

std::uint64_t bench_trial_seed(std::uint64_t master, std::size_t suite_index, int trial) {
  return splitmix64(splitmix64(master) ^ splitmix64((static_cast<std::uint64_t>(suite_index) << 32) |
                                                   static_cast<std::uint32_t>(trial)));
}

const BenchRow& BenchReport::row(const std::string& suite, const std::string& method) const {
  for (const auto& r : rows) {
    if (r.suite == suite && r.method == method) return r;
  }
  throw Error(ErrorCode::Parameter, "no benchmark row for " + suite + "/" + method);
}

BenchReport run_table2_benchmark(const BenchConfig& config) {
  if (config.trials < 0) throw Error(ErrorCode::Parameter, "trial count must be non-negative");
  if (!(config.success_threshold_m > 0)) throw Error(ErrorCode::Parameter, "success threshold must be positive");
  for (const auto& m : config.methods) {
    if (m != "icp" && m != "coarse+icp" && m != "hybrid") throw Error(ErrorCode::Parameter, "unknown method '" + m + "'");
  }
  BenchReport report;
  for (std::size_t s = 0; s < config.suites.size(); ++s) {
    const auto& suite = config.suites[s];
    IcpParams icp_params = config.icp;
    icp_params.max_pair_dist = suite.icp_max_pair_dist;
    std::vector<BenchRow> rows(config.methods.size());
    std::vector<int> returned(config.methods.size(), 0);
    for (std::size_t m = 0; m < rows.size(); ++m) {
      rows[m].suite = suite.name;
      rows[m].method = config.methods[m];
      rows[m].trials = config.trials;
    }
    for (int t = 0; t < config.trials; ++t) {
      const auto seed = bench_trial_seed(config.seed, s, t);
      const Pair pair = make_pair(config, suite, seed);
      for (std::size_t m = 0; m < rows.size(); ++m) {
        BenchTrial trial;
        trial.suite = suite.name;
        trial.method = config.methods[m];
        trial.trial = t;
        trial.seed = seed;
        trial.diameter = pair.diameter;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const auto recovered = run_method(config.methods[m], pair, config, icp_params);
          const auto eval =
              evaluate_registration(recovered, pair.truth, pair.diameter, config.success_threshold_m, pair.center);
          trial.success = eval.success;
          trial.pose_rmse = eval.pose_rmse;
          rows[m].mean_pose_rmse += eval.pose_rmse;
          ++returned[m];
        } catch (const Error& e) {
          trial.error = e.what();
        }
        trial.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows[m].successes += trial.success;
        rows[m].mean_seconds += trial.seconds;
        report.trials.push_back(std::move(trial));
      }
    }
    for (std::size_t m = 0; m < rows.size(); ++m) {
      auto& r = rows[m];
      if (r.trials > 0) {
        r.success_rate = static_cast<double>(r.successes) / r.trials;
        r.mean_seconds /= r.trials;
      }
      r.mean_pose_rmse = returned[m] > 0 ? r.mean_pose_rmse / returned[m] : std::numeric_limits<double>::quiet_NaN();
      report.rows.push_back(r);
    }
  }
  return report;
}

nlohmann::json bench_to_json(const BenchReport& report, bool with_timing) {
  using nlohmann::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row = {{"suite", r.suite},
                {"method", r.method},
                {"trials", r.trials},
                {"successes", r.successes},
                {"success_rate", r.success_rate},
                {"mean_pose_rmse_m", num(r.mean_pose_rmse)}};
    if (with_timing) row["mean_seconds"] = r.mean_seconds;
    rows.push_back(row);
  }
  json trials = json::array();
  for (const auto& t : report.trials) {
    json row = {{"suite", t.suite},     {"method", t.method},          {"trial", t.trial},
                {"seed", t.seed},       {"success", t.success},        {"pose_rmse_m", num(t.pose_rmse)},
                {"diameter_m", t.diameter}, {"error", t.error}};
    if (with_timing) row["seconds"] = t.seconds;
    trials.push_back(row);
  }
  return {{"rows", rows}, {"trials", trials}};
}

std::string render_bench_text(const BenchReport& report) {
  std::string out = "suite    method        success   mean pose RMSE (m)   mean time (s)\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-8s %-12s %3d/%-3d %4.0f%%   %18.4f   %13.2f\n", r.suite.c_str(), r.method.c_str(),
                  r.successes, r.trials, 100.0 * r.success_rate, r.mean_pose_rmse, r.mean_seconds);
    out += buf;
  }
  return out;
}

}  // namespace tlsmon

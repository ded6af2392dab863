#pragma once

#include "tlsmon/registration.hpp"
#include "tlsmon/synth.hpp"

#include "json.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace tlsmon {

// One family of epoch pairs: the source epoch is the target terrain moved by a
// random rigid transform of the given rotation angle and translation length.
struct BenchSuite {
  std::string name;
  double rotation_deg = 10.0;
  double translation_fraction = 0.05;  // of the target diameter
  double local_change_fraction = 0.0;  // share of the extent covered by an injected landslide
  double change_depth_m = 1.5;
  bool resample = false;  // draw fresh sample positions for the source epoch
  double noise_sigma = 0.0;
  double icp_max_pair_dist = std::numeric_limits<double>::infinity();
};

std::vector<BenchSuite> default_bench_suites();

inline const std::vector<std::string> kBenchMethods{"icp", "coarse+icp", "hybrid"};

struct BenchConfig {
  int trials = 5;
  std::uint64_t seed = 1;
  TerrainParams terrain = [] {
    TerrainParams t;
    t.extent = {60.0, 60.0};
    t.mean_slope_deg = 50.0;
    t.roughness = 1.0;
    t.density = 20.0;
    return t;
  }();
  std::vector<BenchSuite> suites = default_bench_suites();
  std::vector<std::string> methods = kBenchMethods;
  IcpParams icp = [] {
    IcpParams p;
    p.max_iter = 100;
    p.max_source_points = 10000;
    return p;
  }();
  HybridParams hybrid;
  CoarseParams coarse;
  double success_threshold_m = 1.0;
};

struct BenchTrial {
  std::string suite;
  std::string method;
  int trial = 0;
  std::uint64_t seed = 0;
  bool success = false;
  double pose_rmse = std::numeric_limits<double>::quiet_NaN();  // NaN when the method threw
  double diameter = 0.0;
  double seconds = 0.0;
  std::string error;
};

struct BenchRow {
  std::string suite;
  std::string method;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_pose_rmse = 0.0;  // over trials that returned a transform
  double mean_seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // suite-major, one per method
  std::vector<BenchTrial> trials;
  const BenchRow& row(const std::string& suite, const std::string& method) const;
};

// Seed of trial `t` in suite `s`; independent of execution order.
std::uint64_t bench_trial_seed(std::uint64_t master, std::size_t suite_index, int trial);

BenchReport run_table2_benchmark(const BenchConfig& config);

// Timing fields are left out when `with_timing` is false so reruns compare equal.
nlohmann::json bench_to_json(const BenchReport& report, bool with_timing = true);
std::string render_bench_text(const BenchReport& report);

}  // namespace tlsmon

#include "tlsmon/analysis.hpp"
#include "tlsmon/bench.hpp"
#include "tlsmon/cloud_io.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/config_io.hpp"
#include "tlsmon/deformation.hpp"
#include "tlsmon/error.hpp"
#include "tlsmon/ground_filter.hpp"
#include "tlsmon/multiview.hpp"
#include "tlsmon/pipeline.hpp"
#include "tlsmon/registration.hpp"
#include "tlsmon/synth.hpp"
#include "tlsmon/terrain.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace tlsmon;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, text);
}

// Optional parameter file merged over defaults.
template <typename T>
T params_from(const std::string& path) {
  T p;
  if (!path.empty()) p = read_json(path).get<T>();
  return p;
}

struct TerrainOpts {
  std::vector<double> extent{40.0, 40.0};
  double slope = 70.0;
  double roughness = 0.5;
  double density = 154.0;
  std::uint64_t seed = 1;
  std::vector<double> origin{0.0, 0.0, 0.0};

  void add(CLI::App* app) {
    app->add_option("--extent", extent, "across-slope and up-slope size, m")->expected(2);
    app->add_option("--slope", slope, "mean slope, degrees");
    app->add_option("--roughness", roughness, "fractal amplitude, m");
    app->add_option("--density", density, "points per m^2");
    app->add_option("--terrain-seed", seed, "surface seed");
    app->add_option("--origin", origin, "world position of the slope centre")->expected(3);
  }

  TerrainParams params() const {
    TerrainParams t;
    t.extent = {extent[0], extent[1]};
    t.mean_slope_deg = slope;
    t.roughness = roughness;
    t.density = density;
    t.seed = seed;
    t.origin = {origin[0], origin[1], origin[2]};
    return t;
  }
};

// Input cloud in absolute coordinates, or a fresh terrain sample.
Scene scene_from(const std::string& in, const TerrainModel& model) {
  if (in.empty()) return gen_terrain(model);
  Scene s;
  s.cloud = load_cloud(in);
  rebase(s.cloud, Point3::Zero());
  if (s.cloud.labels) s.truth.ground_labels = *s.cloud.labels;
  if (auto it = s.cloud.scalars.find("true_displacement"); it != s.cloud.scalars.end()) {
    s.truth.true_displacement = it->second;
  }
  return s;
}

void save_scene(const std::string& out, Scene scene) {
  if (scene.truth.true_displacement.size() == scene.cloud.size()) {
    scene.cloud.scalars["true_displacement"] = scene.truth.true_displacement;
  }
  save_cloud(out, scene.cloud);
}

std::string matrix_file(const RigidTransform& t) { return format_matrix(t); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slope monitoring from multi-epoch terrestrial laser scans"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // register
  std::string src, dst, method = "hybrid", out_matrix = "transform.txt", out_json, reg_params;
  double max_pair = -1.0;
  auto* reg = app.add_subcommand("register", "align a source epoch to a reference epoch");
  reg->add_option("--src", src, "source cloud")->required();
  reg->add_option("--dst", dst, "reference cloud")->required();
  reg->add_option("--method", method)->check(CLI::IsMember({"icp", "coarse+icp", "hybrid"}));
  reg->add_option("--out", out_matrix, "4x4 transform, row-major");
  reg->add_option("--json", out_json, "registration result (default: <out>.json)");
  reg->add_option("--params", reg_params, "hybrid parameter JSON");
  reg->add_option("--max-pair-dist", max_pair, "ICP pair rejection distance, m");
  reg->callback([&] {
    PointCloud s = load_cloud(src), d = load_cloud(dst);
    rebase(s, d.origin_shift);
    auto hp = params_from<HybridParams>(reg_params);
    if (max_pair > 0) hp.icp.max_pair_dist = max_pair;
    RegistrationResult r;
    if (method == "icp") {
      r = icp(s, d, hp.icp);
    } else if (method == "coarse+icp") {
      const auto c = coarse_register(s, d, hp.coarse);
      r = icp(s, d, hp.icp, c.transform);
    } else {
      r = register_global_hybrid(s, d, hp);
    }
    r.transform = to_absolute(r.transform, d.origin_shift, d.origin_shift);
    write_text(out_matrix, matrix_file(r.transform));
    json doc = r;
    doc["method"] = method;
    write_text(out_json.empty() ? out_matrix + ".json" : out_json, doc.dump(2) + "\n");
    std::printf("rmse %.4f m, %d iterations, %s\n", r.rmse, r.iterations, r.converged ? "converged" : "not converged");
  });

  // register-multiview
  std::string list_file, mv_out_dir = ".", mv_params;
  auto* mv = app.add_subcommand("register-multiview", "merge same-epoch station scans");
  mv->add_option("--list", list_file, "text file with one cloud path per line")->required();
  mv->add_option("--out-dir", mv_out_dir, "directory for <name>.txt transforms");
  mv->add_option("--params", mv_params, "multiview parameter JSON");
  mv->callback([&] {
    std::istringstream is(read_file(list_file));
    std::vector<fs::path> paths;
    for (std::string line; std::getline(is, line);) {
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      const auto e = line.find_last_not_of(" \t\r");
      fs::path p = line.substr(b, e - b + 1);
      if (p.is_relative()) p = fs::path(list_file).parent_path() / p;
      paths.push_back(p);
    }
    std::vector<PointCloud> clouds;
    for (const auto& p : paths) clouds.push_back(load_cloud(p));
    if (clouds.empty()) throw Error(ErrorCode::EmptyInput, "no clouds listed in " + list_file);
    const Point3 shift = clouds[0].origin_shift;
    for (auto& c : clouds) rebase(c, shift);
    const auto res = register_multiview(clouds, params_from<MultiviewParams>(mv_params));
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto out = fs::path(mv_out_dir) / (paths[i].stem().string() + ".txt");
      write_text(out, matrix_file(to_absolute(res.transforms[i], shift, shift)));
      std::printf("%s -> %s\n", paths[i].string().c_str(), out.string().c_str());
    }
    for (const auto& m : res.merges) {
      std::printf("merge similarity %.3f rmse %.4f m overlap %.2f\n", m.similarity, m.rmse, m.overlap_ratio);
    }
  });

  // filter
  std::string f_in, f_out, f_removed, f_mask, f_params;
  auto* flt = app.add_subcommand("filter", "separate ground from vegetation");
  flt->add_option("--in", f_in)->required();
  flt->add_option("--out", f_out, "ground points")->required();
  flt->add_option("--removed", f_removed, "vegetation points");
  flt->add_option("--mask", f_mask, "+idx / -idx overrides, one per line");
  flt->add_option("--params", f_params, "filter parameter JSON");
  flt->callback([&] {
    const PointCloud cloud = load_cloud(f_in);
    const auto mask = f_mask.empty() ? std::vector<MaskEntry>{} : parse_mask(read_file(f_mask));
    const auto r = filter_vegetation(cloud, params_from<FilterParams>(f_params), mask);
    save_cloud(f_out, r.ground);
    if (!f_removed.empty()) save_cloud(f_removed, r.removed);
    std::printf("ground %zu, vegetation %zu\n", r.labeling.ground_count, r.labeling.vegetation_count);
  });

  // dtm
  std::string d_in, d_out;
  double max_edge = 2.0;
  auto* dtm = app.add_subcommand("dtm", "triangulate ground points");
  dtm->add_option("--in", d_in)->required();
  dtm->add_option("--out", d_out)->required();
  dtm->add_option("--max-edge", max_edge, "longest kept triangle edge, m");
  dtm->callback([&] {
    DtmParams p;
    p.max_edge = max_edge;
    const auto mesh = build_dtm(load_cloud(d_in), p);
    save_mesh(d_out, mesh);
    std::printf("%zu vertices, %zu triangles\n", mesh.vertices.size(), mesh.triangles.size());
  });

  // deform
  std::string c_path, r_path, field_out, ref_id, cmp_id;
  double days = 0.0, max_dist = 5.0;
  bool no_border_mask = false;
  auto* def = app.add_subcommand("deform", "signed distance from the compared DTM to the reference DTM");
  def->add_option("--compared", c_path)->required();
  def->add_option("--reference", r_path)->required();
  def->add_option("--days", days, "interval between the epochs")->required();
  def->add_option("--out", field_out)->required();
  def->add_option("--max-dist", max_dist, "larger distances are marked invalid, m");
  def->add_flag("--no-border-mask", no_border_mask);
  def->add_option("--reference-id", ref_id);
  def->add_option("--compared-id", cmp_id);
  def->callback([&] {
    const auto compared = load_mesh(c_path), reference = load_mesh(r_path);
    MeshDistanceParams p;
    p.max_dist = max_dist;
    p.mask_border = !no_border_mask;
    auto field = mesh_distance(compared, reference, p, days);
    field.reference_epoch = ref_id;
    field.compared_epoch = cmp_id;
    write_text(field_out, write_field_mesh(compared, field));
    const auto st = field_stats(field);
    std::printf("mean %.4f m, std %.4f m over %zu valid vertices\n", st.mean, st.std, st.valid_count);
  });

  // regions
  std::string g_field, g_out;
  double threshold = 2.0, min_area = 25.0;
  auto* rg = app.add_subcommand("regions", "connected areas moving faster than a threshold");
  rg->add_option("--field", g_field)->required();
  rg->add_option("--threshold", threshold, "mm/day");
  rg->add_option("--min-area", min_area, "m^2");
  rg->add_option("--out", g_out)->required();
  rg->callback([&] {
    const auto fm = parse_field_mesh(read_file(g_field));
    auto regions = significant_regions(fm.mesh, rate_field(fm.field), threshold, min_area);
    for (auto& r : regions) {
      r.volume_m3 = region_volume(r, fm.field, fm.mesh);
      if (!fm.field.reference_epoch.empty()) r.period = fm.field.reference_epoch + "," + fm.field.compared_epoch;
    }
    json doc = regions_to_json(regions);
    doc["threshold_mm_day"] = threshold;
    doc["min_area_m2"] = min_area;
    write_text(g_out, doc.dump(2) + "\n");
    for (const auto& r : regions) {
      std::printf("region %d: %.1f m^2, %.2f mm/day, %.1f m^3\n", r.id, r.area_m2, r.mean_rate_mm_day, r.volume_m3);
    }
    if (regions.empty()) std::printf("no significant regions\n");
  });

  // classify
  std::string k_regions, k_field, k_out;
  std::optional<double> motion_az;
  std::vector<std::string> annotate;
  auto* cls = app.add_subcommand("classify", "measure and classify region shapes");
  cls->add_option("--regions", k_regions)->required();
  cls->add_option("--field", k_field)->required();
  cls->add_option("--out", k_out)->required();
  cls->add_option("--motion-az", motion_az, "motion azimuth, degrees clockwise from +y");
  cls->add_option("--annotate", annotate, "id=TYPE, Cruden movement type of a region");
  cls->callback([&] {
    const auto fm = parse_field_mesh(read_file(k_field));
    auto regions = regions_from_json(read_json(k_regions));
    ExtentParams ep;
    ep.motion_azimuth_deg = motion_az;
    std::vector<ShapeMeasure> shapes;
    for (auto& r : regions) {
      shapes.push_back(region_extent(r, fm.field, fm.mesh, ep));
      r.W_m = shapes.back().W_m;
      r.L_m = shapes.back().L_m;
    }
    std::vector<MotionAnnotation> notes;
    for (const auto& a : annotate) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::Parse, "annotation '" + a + "' is not id=TYPE");
      MotionAnnotation m;
      try {
        m.region_id = std::stoi(a.substr(0, eq));
      } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, "annotation '" + a + "' has no integer id");
      }
      m.cruden_type = parse_cruden_type(a.substr(eq + 1));
      notes.push_back(m);
    }
    const auto report = build_report({}, {fm.field}, regions, shapes, notes, ErrorBudget{});
    write_text(k_out, write_report(report));
    std::cout << render_report_text(report);
  });

  // budget
  ErrorBudget budget;
  auto* bud = app.add_subcommand("budget", "propagate per-stage errors into sigma");
  bud->add_option("--tls", budget.m_tls, "scanner accuracy, mm");
  bud->add_option("--mreg", budget.m_mreg, "multi-view registration, mm");
  bud->add_option("--treg", budget.m_treg, "multi-epoch registration, mm");
  bud->add_option("--veg", budget.m_veg, "vegetation filtering, mm");
  bud->add_option("--mesh", budget.m_mesh, "meshing, mm");
  bud->callback([&] { std::printf("sigma = %.1f mm\n", budget.sigma_mm()); });

  // synth
  auto* syn = app.add_subcommand("synth", "synthetic scenes with ground truth");
  syn->require_subcommand(1);
  TerrainOpts topts;
  std::string s_in, s_out;

  auto* s_ter = syn->add_subcommand("terrain", "sample a fractal slope");
  topts.add(s_ter);
  std::uint64_t sample_seed = 0;
  s_ter->add_option("--sample-seed", sample_seed, "point placement seed, 0 = from the terrain seed");
  s_ter->add_option("--out", s_out)->required();
  s_ter->callback([&] {
    auto tp = topts.params();
    tp.sample_seed = sample_seed;
    const auto scene = gen_terrain(TerrainModel(tp));
    save_scene(s_out, scene);
    std::printf("%zu points\n", scene.cloud.size());
  });

  auto* s_veg = syn->add_subcommand("veg", "add shrubs above a terrain");
  topts.add(s_veg);
  VegetationParams vp;
  std::vector<double> heights{vp.height_range.x(), vp.height_range.y()};
  s_veg->add_option("--in", s_in, "terrain cloud (default: sample the terrain)");
  s_veg->add_option("--coverage", vp.coverage, "vegetation share of all points");
  s_veg->add_option("--heights", heights, "min and max height above ground, m")->expected(2);
  s_veg->add_option("--seed", vp.seed);
  s_veg->add_option("--out", s_out)->required();
  s_veg->callback([&] {
    const TerrainModel model(topts.params());
    vp.height_range = {heights[0], heights[1]};
    const auto scene = add_vegetation(scene_from(s_in, model), model, vp);
    save_scene(s_out, scene);
    std::printf("%zu points\n", scene.cloud.size());
  });

  auto* s_slide = syn->add_subcommand("slide", "displace part of the slope");
  topts.add(s_slide);
  RegionSpec spec;
  std::vector<double> center{0.0, 0.0};
  std::string shape = "ellipse";
  s_slide->add_option("--in", s_in, "cloud to deform (default: sample the terrain)");
  s_slide->add_option("--center", center, "u v on the base plane, m")->expected(2);
  s_slide->add_option("--radius-along", spec.radius_along);
  s_slide->add_option("--radius-across", spec.radius_across);
  s_slide->add_option("--depth", spec.depth_m, "signed, m");
  s_slide->add_option("--azimuth", spec.azimuth_deg, "motion azimuth, degrees");
  s_slide->add_option("--shape", shape)->check(CLI::IsMember({"ellipse", "rectangle"}));
  s_slide->add_option("--taper", spec.taper_m, "m");
  s_slide->add_option("--slide-fraction", spec.slide_fraction, "in-plane share of the motion");
  s_slide->add_option("--out", s_out)->required();
  s_slide->callback([&] {
    const TerrainModel model(topts.params());
    spec.center = {center[0], center[1]};
    spec.shape = shape == "rectangle" ? RegionShape::Rectangle : RegionShape::Ellipse;
    const auto scene = apply_landslide(scene_from(s_in, model), model, spec);
    save_scene(s_out, scene);
    std::printf("truth volume %.2f m^3\n", landslide_volume(model, spec));
  });

  auto* s_scan = syn->add_subcommand("scan", "simulate station scans");
  StationParams sp;
  std::vector<std::string> pose_files;
  std::string prefix = "station";
  s_scan->add_option("--in", s_in, "scene cloud")->required();
  s_scan->add_option("--pose", pose_files, "station-to-scene transform file, one per station")->required();
  s_scan->add_option("--noise", sp.noise_sigma, "m");
  s_scan->add_option("--max-range", sp.max_range, "m, 0 = unlimited");
  s_scan->add_flag("--occlusion", sp.occlusion);
  s_scan->add_option("--seed", sp.seed);
  s_scan->add_option("--prefix", prefix, "output path prefix; writes <prefix>_<k>.ply");
  s_scan->callback([&] {
    PointCloud cloud = load_cloud(s_in);
    rebase(cloud, Point3::Zero());
    std::vector<RigidTransform> poses;
    for (const auto& f : pose_files) poses.push_back(parse_matrix(read_file(f)));
    const auto views = simulate_stations(cloud, poses, sp);
    for (std::size_t k = 0; k < views.size(); ++k) {
      const std::string out = prefix + "_" + std::to_string(k) + ".ply";
      save_cloud(out, views[k]);
      std::printf("%s: %zu points\n", out.c_str(), views[k].size());
    }
  });

  // bench
  auto* bench = app.add_subcommand("bench", "registration benchmarks");
  bench->require_subcommand(1);
  auto* table2 = bench->add_subcommand("table2", "success rate and pose error of icp, coarse+icp and hybrid");
  BenchConfig bc;
  std::string bench_out;
  bool no_timing = false;
  table2->add_option("--trials", bc.trials);
  table2->add_option("--seed", bc.seed);
  table2->add_option("--methods", bc.methods)->check(CLI::IsMember(kBenchMethods));
  table2->add_option("--out", bench_out, "JSON report");
  table2->add_flag("--no-timing", no_timing, "leave timings out of the JSON report");
  table2->callback([&] {
    const auto report = run_table2_benchmark(bc);
    std::cout << render_bench_text(report);
    if (!bench_out.empty()) write_text(bench_out, bench_to_json(report, !no_timing).dump(2) + "\n");
  });

  // pipeline
  std::string cfg_path, run_dir, example_out;
  auto* pipe = app.add_subcommand("pipeline", "run every stage from scans to report");
  pipe->add_option("--config", cfg_path, "PipelineConfig JSON");
  pipe->add_option("--run-dir", run_dir, "override the configured run directory");
  pipe->add_option("--write-example", example_out, "write the built-in landslide example config and exit");
  pipe->callback([&] {
    if (!example_out.empty()) {
      write_text(example_out, pipeline_config_to_json(example_landslide_config()).dump(2) + "\n");
      std::printf("wrote %s\n", example_out.c_str());
      return;
    }
    if (cfg_path.empty()) throw CLI::RequiredError("--config");
    auto cfg = pipeline_config_from_json(read_json(cfg_path));
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    const auto res = run_pipeline(cfg);
    std::cout << render_report_text(res.report);
    std::printf("%zu artifacts under %s (see manifest.json)\n", res.manifest.size(), cfg.run_dir.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

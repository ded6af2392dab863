#include "tlsmon/pipeline.hpp"

#include "tlsmon/cloud_io.hpp"
#include "tlsmon/cloud_ops.hpp"
#include "tlsmon/config_io.hpp"
#include "tlsmon/error.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace tlsmon {

using nlohmann::json;

namespace {

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Stage) throw;
    throw Error(ErrorCode::Stage, std::string("stage ") + name + ": " + std::string(to_string(e.code())) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Stage, std::string("stage ") + name + ": " + e.what());
  }
}

json epoch_input_json(const EpochInput& e) { return {{"epoch_id", e.epoch_id}, {"date", e.date}, {"scans", e.scans}}; }

EpochInput epoch_input_from_json(const json& j) {
  EpochInput e;
  ObjectReader(j, "epoch").get("epoch_id", e.epoch_id).get("date", e.date).get("scans", e.scans).finish();
  return e;
}

json synthetic_epoch_json(const SyntheticEpoch& e) {
  json slides = json::array(), poses = json::array();
  for (const auto& s : e.landslides) slides.push_back(s);
  for (const auto& p : e.station_poses) poses.push_back(p);
  return {{"epoch_id", e.epoch_id}, {"date", e.date}, {"landslides", slides}, {"station_poses", poses}};
}

SyntheticEpoch synthetic_epoch_from_json(const json& j) {
  SyntheticEpoch e;
  ObjectReader(j, "synthetic epoch")
      .get("epoch_id", e.epoch_id)
      .get("date", e.date)
      .get("landslides", e.landslides)
      .get("station_poses", e.station_poses)
      .finish();
  return e;
}

json site_json(const SyntheticSite& s) {
  json epochs = json::array();
  for (const auto& e : s.epochs) epochs.push_back(synthetic_epoch_json(e));
  return {{"terrain", s.terrain},
          {"vegetation", s.vegetation ? json(*s.vegetation) : json(nullptr)},
          {"stations", s.stations},
          {"epochs", epochs}};
}

SyntheticSite site_from_json(const json& j) {
  SyntheticSite s;
  json veg, epochs = json::array();
  ObjectReader(j, "synthetic")
      .get("terrain", s.terrain)
      .get("vegetation", veg)
      .get("stations", s.stations)
      .get("epochs", epochs)
      .finish();
  if (!veg.is_null()) s.vegetation = veg.get<VegetationParams>();
  if (!epochs.is_array()) throw Error(ErrorCode::Parse, "synthetic.epochs must be an array");
  for (const auto& e : epochs) s.epochs.push_back(synthetic_epoch_from_json(e));
  return s;
}

bool plain_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '/' || c == '\\') return false;
  }
  return id != "-" && id != "." && id != "..";
}

struct EpochMeta {
  std::string id;
  std::string date;
  std::size_t stations = 0;
};

std::vector<EpochMeta> epoch_meta(const PipelineConfig& c) {
  std::vector<EpochMeta> out;
  if (c.synthetic) {
    for (const auto& e : c.synthetic->epochs) out.push_back({e.epoch_id, e.date, e.station_poses.size()});
  } else {
    for (const auto& e : c.epochs) out.push_back({e.epoch_id, e.date, e.scans.size()});
  }
  return out;
}

class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& stage, std::string_view bytes) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    write_file(path, bytes);
    manifest_.push_back({rel, stage, static_cast<std::uintmax_t>(bytes.size())});
  }

  const std::vector<Artifact>& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<Artifact> manifest_;
};

PointCloud strip(PointCloud c) {
  c.scalars.clear();
  c.labels.reset();
  c.normals.reset();
  c.normal_valid.reset();
  return c;
}

}  // namespace

TerrainParams synthetic_epoch_terrain(const SyntheticSite& site, std::uint64_t rng_seed, std::size_t epoch) {
  TerrainParams t = site.terrain;
  t.sample_seed = splitmix64(splitmix64(rng_seed) ^ (0x5a4d504cULL + epoch)) | 1;
  return t;
}

std::uint64_t synthetic_noise_seed(std::uint64_t rng_seed, std::size_t epoch) {
  return splitmix64(splitmix64(rng_seed ^ 0x6e6f697365ULL) + epoch);
}

json pipeline_config_to_json(const PipelineConfig& c) {
  json epochs = json::array(), annotations = json::array();
  for (const auto& e : c.epochs) epochs.push_back(epoch_input_json(e));
  for (const auto& a : c.annotations) {
    annotations.push_back({{"region_id", a.region_id},
                           {"type", a.cruden_type ? json(std::string(to_string(*a.cruden_type))) : json(nullptr)}});
  }
  return {{"run_dir", c.run_dir},
          {"rng_seed", c.rng_seed},
          {"synthetic", c.synthetic ? site_json(*c.synthetic) : json(nullptr)},
          {"epochs", epochs},
          {"merge_voxel", c.merge_voxel},
          {"multiview", c.multiview},
          {"registration", c.registration},
          {"filter", c.filter},
          {"dtm", c.dtm},
          {"deformation", c.deformation},
          {"regions", {{"threshold_mm_day", c.threshold_mm_day}, {"min_area_m2", c.min_area_m2}}},
          {"extent",
           {{"motion_azimuth_deg", c.extent.motion_azimuth_deg ? json(*c.extent.motion_azimuth_deg) : json(nullptr)},
            {"min_motion_ratio", c.extent.min_motion_ratio}}},
          {"annotations", annotations},
          {"budget", c.budget},
          {"write_intermediates", c.write_intermediates}};
}

PipelineConfig pipeline_config_from_json(const json& doc) {
  PipelineConfig c;
  json synthetic, epochs = json::array(), regions = json::object(), extent = json::object(),
                  annotations = json::array();
  ObjectReader(doc, "config")
      .get("run_dir", c.run_dir)
      .get("rng_seed", c.rng_seed)
      .get("synthetic", synthetic)
      .get("epochs", epochs)
      .get("merge_voxel", c.merge_voxel)
      .get("multiview", c.multiview)
      .get("registration", c.registration)
      .get("filter", c.filter)
      .get("dtm", c.dtm)
      .get("deformation", c.deformation)
      .get("regions", regions)
      .get("extent", extent)
      .get("annotations", annotations)
      .get("budget", c.budget)
      .get("write_intermediates", c.write_intermediates)
      .finish();
  if (!synthetic.is_null()) c.synthetic = site_from_json(synthetic);
  if (!epochs.is_array()) throw Error(ErrorCode::Parse, "epochs must be an array");
  for (const auto& e : epochs) c.epochs.push_back(epoch_input_from_json(e));
  ObjectReader(regions, "regions").get("threshold_mm_day", c.threshold_mm_day).get("min_area_m2", c.min_area_m2).finish();
  json azimuth;
  ObjectReader(extent, "extent").get("motion_azimuth_deg", azimuth).get("min_motion_ratio", c.extent.min_motion_ratio).finish();
  if (!azimuth.is_null()) {
    if (!azimuth.is_number()) throw Error(ErrorCode::Parse, "extent.motion_azimuth_deg must be a number or null");
    c.extent.motion_azimuth_deg = azimuth.get<double>();
  }
  if (!annotations.is_array()) throw Error(ErrorCode::Parse, "annotations must be an array");
  for (const auto& a : annotations) {
    MotionAnnotation m;
    json type;
    ObjectReader(a, "annotation").get("region_id", m.region_id).get("type", type).finish();
    if (!type.is_null()) {
      if (!type.is_string()) throw Error(ErrorCode::Parse, "annotation type must be a string or null");
      m.cruden_type = parse_cruden_type(type.get<std::string>());
    }
    c.annotations.push_back(m);
  }
  validate_pipeline_config(c);
  return c;
}

void validate_pipeline_config(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Parameter, m); };
  if (c.run_dir.empty()) fail("run_dir must not be empty");
  if (!(c.merge_voxel >= 0)) fail("merge_voxel must be non-negative");
  if (!(c.threshold_mm_day > 0)) fail("rate threshold must be positive");
  if (!(c.min_area_m2 >= 0)) fail("min_area must be non-negative");
  if (!(c.deformation.max_dist > 0)) fail("max_dist must be positive");
  if (!(c.dtm.max_edge > 0)) fail("max_edge must be positive");
  if (!(c.filter.cell_size > 0) || !(c.filter.margin >= 0)) fail("filter cell size and margin must be positive");
  if (!(c.filter.cloth.grid_resolution > 0) || c.filter.cloth.rigidness < 1 || c.filter.cloth.rigidness > 3) {
    fail("cloth resolution must be positive and rigidness in 1..3");
  }
  if (c.registration.alpha_steps < 1 || !(c.registration.alpha_start >= 0 && c.registration.alpha_start <= 1)) {
    fail("hybrid alpha schedule out of range");
  }
  if (!(c.registration.keep_fraction > 0 && c.registration.keep_fraction <= 1)) fail("keep_fraction must be in (0, 1]");
  if (c.synthetic && !c.epochs.empty()) fail("give either synthetic or epochs, not both");
  const auto meta = epoch_meta(c);
  if (meta.size() < 2) fail("at least two epochs are required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (!plain_id(meta[i].id)) fail("epoch id '" + meta[i].id + "' must be non-empty without commas, spaces or slashes");
    if (!ids.insert(meta[i].id).second) fail("duplicate epoch id " + meta[i].id);
    if (meta[i].stations == 0) fail("epoch " + meta[i].id + " has no stations");
    const auto d = parse_date(meta[i].date);
    if (i > 0 && interval_days(parse_date(meta[i - 1].date), d) <= 0) fail("epoch dates must increase");
  }
  if (c.synthetic) {
    if (!(c.synthetic->terrain.density > 0)) fail("terrain density must be positive");
    if (c.synthetic->stations.noise_sigma < 0) fail("noise sigma must be non-negative");
    for (const auto& e : c.synthetic->epochs) {
      for (const auto& s : e.landslides) {
        if (s.depth_m == 0 || !(s.radius_along > 0 && s.radius_across > 0)) fail("landslide depth and radii must be non-zero");
      }
    }
  }
}

PipelineConfig example_landslide_config() {
  PipelineConfig c;
  c.run_dir = "run";
  c.rng_seed = 7;
  SyntheticSite site;
  site.terrain.extent = {60.0, 60.0};
  site.terrain.mean_slope_deg = 70.0;
  site.terrain.roughness = 1.0;
  site.terrain.density = 20.0;
  site.terrain.seed = 7;
  site.terrain.origin = {0.0, 40.0, 20.0};
  site.vegetation = VegetationParams{};
  site.stations.noise_sigma = 0.006;
  site.stations.occlusion = true;
  site.stations.max_range = 60.0;
  site.stations.splat_radius = 0.6 / std::sqrt(site.terrain.density);

  const std::vector<RigidTransform> stations{
      RigidTransform::identity(),
      RigidTransform::from_axis_angle(Point3::UnitZ(), 0.3, Point3(-22, 4, 1)),
      RigidTransform::from_axis_angle(Point3(0.05, 0, 1), -0.35, Point3(22, 2, -1))};
  SyntheticEpoch first;
  first.epoch_id = "I";
  first.date = "2014-01-01";
  first.station_poses = stations;

  // The instruments are set up again on the second visit, a few metres off.
  const auto moved = RigidTransform::from_axis_angle(Point3::UnitZ(), 0.1, Point3(3, -2, 0.5));
  SyntheticEpoch second;
  second.epoch_id = "II";
  second.date = "2014-06-30";
  for (const auto& p : stations) second.station_poses.push_back(moved * p);
  RegionSpec slide;
  slide.center = {0.0, 0.0};
  slide.radius_along = slide.radius_across = 10.0;
  slide.depth_m = 0.5;
  slide.azimuth_deg = 180.0;
  slide.shape = RegionShape::Rectangle;
  slide.taper_m = 1.0;
  second.landslides = {slide};

  site.epochs = {first, second};
  c.synthetic = site;

  c.registration.icp.max_pair_dist = 0.25;
  c.registration.icp.max_source_points = 20000;
  c.registration.icp.max_iter = 80;
  return c;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  run_stage("config", [&] { validate_pipeline_config(config); });
  PipelineResult res;
  RunDir dir(config.run_dir);
  const json config_json = pipeline_config_to_json(config);
  run_stage("config", [&] { dir.write("config.json", "config", config_json.dump(2) + "\n"); });

  const auto meta = epoch_meta(config);
  const std::size_t n_epochs = meta.size();
  auto epoch_path = [&](std::size_t e, const std::string& name) { return "epochs/" + meta[e].id + "/" + name; };

  // Acquisition: per-epoch station scans in station coordinates.
  std::vector<std::vector<PointCloud>> scans(n_epochs);
  if (config.synthetic) {
    run_stage("synth", [&] {
      const auto& site = *config.synthetic;
      res.site = site;
      const TerrainModel surface(site.terrain);
      std::vector<RegionSpec> slides;
      for (std::size_t e = 0; e < n_epochs; ++e) {
        const auto& se = site.epochs[e];
        const TerrainParams tp = synthetic_epoch_terrain(site, config.rng_seed, e);
        const TerrainModel model(tp);
        Scene scene = gen_terrain(model);
        if (site.vegetation) {
          VegetationParams vp = *site.vegetation;
          vp.seed = splitmix64(vp.seed ^ splitmix64(config.rng_seed));  // same shrubs every visit
          scene = add_vegetation(scene, model, vp);
        }
        slides.insert(slides.end(), se.landslides.begin(), se.landslides.end());
        for (const auto& s : slides) scene = apply_landslide(scene, surface, s);
        StationParams sp = site.stations;
        sp.seed = synthetic_noise_seed(config.rng_seed, e);
        scans[e] = simulate_stations(scene.cloud, se.station_poses, sp);
        for (std::size_t s = 0; s < scans[e].size(); ++s) {
          scans[e][s].epoch_id = se.epoch_id;
          if (config.write_intermediates) {
            dir.write(epoch_path(e, "scan_" + std::to_string(s) + ".ply"), "synth",
                      write_cloud(scans[e][s], CloudFormat::Ply, true));
          }
        }
      }
    });
  } else {
    run_stage("load", [&] {
      for (std::size_t e = 0; e < n_epochs; ++e) {
        for (const auto& path : config.epochs[e].scans) {
          scans[e].push_back(load_cloud(path));
          scans[e].back().epoch_id = meta[e].id;
        }
      }
    });
  }
  const Point3 shift = scans[0][0].origin_shift;
  for (auto& epoch : scans) {
    for (auto& s : epoch) rebase(s, shift);
  }

  // Multi-view: one merged cloud per epoch in the frame of its first station.
  std::vector<PointCloud> merged(n_epochs);
  run_stage("multiview", [&] {
    for (std::size_t e = 0; e < n_epochs; ++e) {
      std::vector<RigidTransform> transforms(scans[e].size());
      if (scans[e].size() > 1) transforms = register_multiview(scans[e], config.multiview).transforms;
      PointCloud all;
      all.origin_shift = shift;
      for (std::size_t s = 0; s < scans[e].size(); ++s) all = concatenate(all, strip(transform_cloud(scans[e][s], transforms[s])));
      all.origin_shift = shift;
      merged[e] = config.merge_voxel > 0 ? voxel_downsample(all, config.merge_voxel) : all;
      merged[e].epoch_id = meta[e].id;
      if (config.write_intermediates) {
        json t = json::array();
        for (const auto& x : transforms) t.push_back(x);
        dir.write(epoch_path(e, "station_transforms.json"), "multiview", json{{"transforms", t}}.dump(2) + "\n");
        dir.write(epoch_path(e, "merged.ply"), "multiview", write_cloud(merged[e], CloudFormat::Ply, false));
      }
    }
  });

  // Multi-phase: every epoch into the first epoch's frame.
  std::vector<PointCloud> registered(n_epochs);
  res.epoch_transforms.assign(n_epochs, RigidTransform::identity());
  run_stage("registration", [&] {
    registered[0] = merged[0];
    for (std::size_t e = 1; e < n_epochs; ++e) {
      res.epoch_transforms[e] = register_global_hybrid(merged[e], merged[0], config.registration).transform;
      registered[e] = transform_cloud(merged[e], res.epoch_transforms[e]);
    }
    for (std::size_t e = 0; e < n_epochs; ++e) {
      if (!config.write_intermediates) continue;
      dir.write(epoch_path(e, "to_reference.txt"), "registration", format_matrix(res.epoch_transforms[e]));
      dir.write(epoch_path(e, "registered.ply"), "registration", write_cloud(registered[e], CloudFormat::Ply, false));
    }
  });

  res.ground.resize(n_epochs);
  run_stage("filter", [&] {
    for (std::size_t e = 0; e < n_epochs; ++e) {
      auto f = filter_vegetation(registered[e], config.filter);
      res.ground[e] = std::move(f.ground);
      if (config.write_intermediates) {
        dir.write(epoch_path(e, "ground.ply"), "filter", write_cloud(res.ground[e], CloudFormat::Ply, false));
        dir.write(epoch_path(e, "removed.ply"), "filter", write_cloud(f.removed, CloudFormat::Ply, false));
      }
    }
  });

  res.dtms.resize(n_epochs);
  run_stage("dtm", [&] {
    DtmParams dp = config.dtm;
    if (!dp.projection_plane) dp.projection_plane = fit_plane(res.ground[0].points).plane;
    for (std::size_t e = 0; e < n_epochs; ++e) {
      res.dtms[e] = build_dtm(res.ground[e], dp);
      if (config.write_intermediates) dir.write(epoch_path(e, "dtm.ply"), "dtm", write_mesh(res.dtms[e]));
    }
  });

  std::vector<EpochRecord> records;
  for (const auto& m : meta) records.push_back({m.id, parse_date(m.date), static_cast<int>(m.stations)});

  run_stage("deformation", [&] {
    for (std::size_t e = 1; e < n_epochs; ++e) {
      const double days = interval_days(records[e - 1].acquisition_date, records[e].acquisition_date);
      auto field = mesh_distance(res.dtms[e], res.dtms[e - 1], config.deformation, days);
      field.reference_epoch = meta[e - 1].id;
      field.compared_epoch = meta[e].id;
      if (config.write_intermediates) {
        dir.write("pairs/" + meta[e - 1].id + "_" + meta[e].id + "/field.ply", "deformation",
                  write_field_mesh(res.dtms[e], field));
      }
      res.fields.push_back(std::move(field));
    }
  });

  run_stage("regions", [&] {
    int next_id = 1;
    for (std::size_t k = 0; k < res.fields.size(); ++k) {
      const auto& field = res.fields[k];
      const auto& mesh = res.dtms[k + 1];
      for (auto& r : significant_regions(mesh, rate_field(field), config.threshold_mm_day, config.min_area_m2)) {
        r.id = next_id++;
        r.period = field.reference_epoch + "," + field.compared_epoch;
        r.volume_m3 = region_volume(r, field, mesh);
        res.regions.push_back(std::move(r));
      }
    }
  });

  run_stage("shape", [&] {
    std::size_t k = 0;
    for (auto& r : res.regions) {
      while (res.fields[k].reference_epoch + "," + res.fields[k].compared_epoch != r.period) ++k;
      auto s = region_extent(r, res.fields[k], res.dtms[k + 1], config.extent);
      r.W_m = s.W_m;
      r.L_m = s.L_m;
      res.shapes.push_back(s);
    }
    json doc = regions_to_json(res.regions);
    doc["threshold_mm_day"] = config.threshold_mm_day;
    doc["min_area_m2"] = config.min_area_m2;
    dir.write("regions.json", "regions", doc.dump(2) + "\n");
  });

  run_stage("report", [&] {
    res.report = build_report(records, res.fields, res.regions, res.shapes, config.annotations, config.budget, config_json);
    dir.write("report.json", "report", write_report(res.report));
    dir.write("report.txt", "report", render_report_text(res.report));
  });

  res.manifest = dir.manifest();
  run_stage("manifest", [&] {
    json artifacts = json::array();
    for (const auto& a : res.manifest) artifacts.push_back({{"path", a.path}, {"stage", a.stage}, {"bytes", a.bytes}});
    const std::string bytes = json{{"artifacts", artifacts}}.dump(2) + "\n";
    write_file(dir.root() / "manifest.json", bytes);
  });
  return res;
}

}  // namespace tlsmon

#pragma once

#include "tlsmon/analysis.hpp"
#include "tlsmon/deformation.hpp"
#include "tlsmon/ground_filter.hpp"
#include "tlsmon/multiview.hpp"
#include "tlsmon/registration.hpp"
#include "tlsmon/synth.hpp"
#include "tlsmon/terrain.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tlsmon {

// Scans of one epoch on disk, one file per station.
struct EpochInput {
  std::string epoch_id;
  std::string date;  // YYYY-MM-DD
  std::vector<std::string> scans;
};

struct SyntheticEpoch {
  std::string epoch_id;
  std::string date;
  std::vector<RegionSpec> landslides;  // cumulative: later epochs keep earlier slides
  std::vector<RigidTransform> station_poses;  // station -> scene
};

// Every epoch samples the same surface with fresh point positions and
// station noise derived from rng_seed; the shrubs stay put.
struct SyntheticSite {
  TerrainParams terrain;
  std::optional<VegetationParams> vegetation;
  StationParams stations;
  std::vector<SyntheticEpoch> epochs;
};

struct PipelineConfig {
  std::string run_dir = "run";
  std::uint64_t rng_seed = 1;
  std::optional<SyntheticSite> synthetic;  // used instead of `epochs` when set
  std::vector<EpochInput> epochs;
  double merge_voxel = 0.1;
  MultiviewParams multiview;
  HybridParams registration;
  FilterParams filter;
  DtmParams dtm;  // a missing plane means the best-fit plane of the first epoch's ground
  MeshDistanceParams deformation;
  double threshold_mm_day = 2.0;
  double min_area_m2 = 25.0;
  ExtentParams extent;
  std::vector<MotionAnnotation> annotations;
  ErrorBudget budget;
  bool write_intermediates = true;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);
// Unknown keys and out-of-range values raise Parse / Parameter.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
void validate_pipeline_config(const PipelineConfig& config);

// Two synthetic epochs 180 days apart on a 70 degree slope with 15 %
// shrub cover; the later one carries a 0.5 m deep 20 x 20 m slide.
PipelineConfig example_landslide_config();

struct Artifact {
  std::string path;  // relative to the run directory
  std::string stage;
  std::uintmax_t bytes = 0;
};

struct PipelineResult {
  Report report;
  std::vector<Artifact> manifest;
  std::vector<RigidTransform> epoch_transforms;  // each epoch into the first epoch's frame
  std::vector<PointCloud> ground;
  std::vector<TriangleMesh> dtms;
  std::vector<DeformationField> fields;  // fields[k] compares epoch k+1 with epoch k
  std::vector<Region> regions;
  std::vector<ShapeMeasure> shapes;
  std::optional<SyntheticSite> site;  // with derived seeds filled in
};

// Runs every stage and writes the artifacts plus manifest.json below
// config.run_dir. A failing stage raises Stage naming the stage and cause.
PipelineResult run_pipeline(const PipelineConfig& config);

// Per-epoch seeds used by the synthetic source.
TerrainParams synthetic_epoch_terrain(const SyntheticSite& site, std::uint64_t rng_seed, std::size_t epoch);
std::uint64_t synthetic_noise_seed(std::uint64_t rng_seed, std::size_t epoch);

}  // namespace tlsmon

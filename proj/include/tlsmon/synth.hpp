#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/rigid_transform.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace tlsmon {

std::uint64_t splitmix64(std::uint64_t x);

struct TerrainParams {
  Eigen::Vector2d extent{40.0, 40.0};  // across-slope (u) x up-slope (v), metres
  double mean_slope_deg = 70.0;
  double roughness = 0.5;  // fractal amplitude, metres
  double density = 154.0;  // points per m^2 of the base plane
  std::uint64_t seed = 1;
  std::uint64_t sample_seed = 0;  // point placement; 0 = derived from seed
  double wavelength = 8.0;  // coarsest octave, metres
  int octaves = 5;
  Point3 origin = Point3::Zero();  // world position of (u, v, w) = 0
};

// Height field w = f(u, v) over an inclined base plane. The base frame has u
// along +x, v up-slope (rising toward +y), w the base-plane normal facing the
// open side of the slope.
class TerrainModel {
 public:
  explicit TerrainModel(const TerrainParams& params);

  const TerrainParams& params() const { return params_; }
  const Point3& eu() const { return eu_; }
  const Point3& ev() const { return ev_; }
  const Point3& ew() const { return ew_; }

  double height(double u, double v) const;
  Eigen::Vector2d gradient(double u, double v) const;
  Point3 surface(double u, double v) const { return world(u, v, height(u, v)); }
  Point3 normal(double u, double v) const;  // unit, toward +w
  Point3 world(double u, double v, double w) const;
  Point3 to_local(const Point3& world_point) const;  // (u, v, w)

 private:
  TerrainParams params_;
  Point3 eu_, ev_, ew_;
};

enum class RegionShape { Ellipse, Rectangle };

struct RegionSpec {
  Eigen::Vector2d center{0.0, 0.0};  // (u, v)
  double radius_along = 10.0;  // half extent along the motion azimuth
  double radius_across = 10.0;
  double depth_m = 0.5;  // signed: + deposition, - erosion
  double azimuth_deg = 180.0;  // compass azimuth of horizontal motion, clockwise from +y
  RegionShape shape = RegionShape::Ellipse;
  double taper_m = 1.0;  // cosine taper width, centred on the nominal boundary
  double slide_fraction = 0.0;  // in-plane motion added to the normal motion
};

struct SceneTruth {
  std::vector<Label> ground_labels;
  std::vector<RigidTransform> station_poses;
  std::vector<double> true_displacement;  // signed, metres
  std::vector<RegionSpec> region_specs;
};

struct Scene {
  PointCloud cloud;
  SceneTruth truth;
};

Scene gen_terrain(const TerrainModel& model);
Scene gen_terrain(const TerrainParams& params);

struct VegetationParams {
  double coverage = 0.15;  // fraction of all points that are vegetation
  Eigen::Vector2d height_range{0.8, 3.0};  // along w above the local ground
  double cluster_radius = 1.5;
  std::size_t points_per_cluster = 150;
  std::uint64_t seed = 2;
};

// Clustered shrub points above the ground surface of `model`.
Scene add_vegetation(const Scene& scene, const TerrainModel& model, const VegetationParams& params);

// Along-axis unit vector of a region in (u, v).
Eigen::Vector2d region_axis(const TerrainModel& model, const RegionSpec& spec);
// Displacement magnitude factor in [0, 1] at (u, v).
double region_weight(const TerrainModel& model, const RegionSpec& spec, double u, double v);
// Displacement vector at (u, v) (zero outside the region).
Point3 region_displacement(const TerrainModel& model, const RegionSpec& spec, double u, double v);

Scene apply_landslide(const Scene& scene, const TerrainModel& model, const RegionSpec& spec);

// Integral of |depth| * weight over the base plane (midpoint rule).
double landslide_volume(const TerrainModel& model, const RegionSpec& spec, double step = 0.02);

struct StationParams {
  double noise_sigma = 0.006;
  double max_range = 0.0;  // 0 = unlimited
  bool occlusion = false;
  std::uint64_t seed = 3;
  double bin_deg = 0.05;
  double splat_radius = 0.05;  // angular footprint of a point in the z-buffer, metres
  double depth_tolerance = 0.1;
};

// Each pose maps station coordinates into the scene frame. Outputs are in
// the station frame and carry scalar "source_index" back into `cloud`.
std::vector<PointCloud> simulate_stations(const PointCloud& cloud, const std::vector<RigidTransform>& poses,
                                          const StationParams& params);

}  // namespace tlsmon

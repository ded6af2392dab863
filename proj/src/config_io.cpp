#include "tlsmon/config_io.hpp"

#include "tlsmon/error.hpp"

#include <string>

namespace nlohmann {

template <int N>
struct adl_serializer<Eigen::Matrix<double, N, 1>> {
  static void to_json(json& j, const Eigen::Matrix<double, N, 1>& v) {
    j = json::array();
    for (int i = 0; i < N; ++i) j.push_back(v[i]);
  }
  static void from_json(const json& j, Eigen::Matrix<double, N, 1>& v) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
      throw tlsmon::Error(tlsmon::ErrorCode::Parse, "expected an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  }
};

}  // namespace nlohmann

namespace tlsmon {
using nlohmann::json;

void to_json(json& j, const RigidTransform& v) {
  j = json::array();
  const Eigen::Matrix4d m = v.matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) j.push_back(m(r, c));
  }
}

void from_json(const json& j, RigidTransform& v) {
  if (!j.is_array() || j.size() != 16) throw Error(ErrorCode::Parse, "transform: expected 16 numbers");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = j[r * 4 + c].get<double>();
  }
  v = RigidTransform::from_matrix(m);
}

void to_json(json& j, const Plane& v) { j = {{"normal", v.normal}, {"offset", v.offset}}; }
void from_json(const json& j, Plane& v) {
  ObjectReader(j, "plane").get("normal", v.normal).get("offset", v.offset).finish();
  if (!(v.normal.norm() > 0)) throw Error(ErrorCode::Parse, "plane normal must be non-zero");
  v.normal.normalize();
}

void to_json(json& j, const IcpParams& v) {
  j = {{"max_iter", v.max_iter},
       {"convergence_eps", v.convergence_eps},
       {"max_pair_dist", distance_json(v.max_pair_dist)},
       {"max_source_points", v.max_source_points},
       {"accelerate", v.accelerate}};
}
void from_json(const json& j, IcpParams& v) {
  ObjectReader(j, "icp")
      .get("max_iter", v.max_iter)
      .get("convergence_eps", v.convergence_eps)
      .distance("max_pair_dist", v.max_pair_dist)
      .get("max_source_points", v.max_source_points)
      .get("accelerate", v.accelerate)
      .finish();
}

void to_json(json& j, const KeypointParams& v) {
  j = {{"scale", v.scale}, {"nms_radius", v.nms_radius}, {"max_keypoints", v.max_keypoints}, {"min_neighbors", v.min_neighbors}};
}
void from_json(const json& j, KeypointParams& v) {
  ObjectReader(j, "keypoints")
      .get("scale", v.scale)
      .get("nms_radius", v.nms_radius)
      .get("max_keypoints", v.max_keypoints)
      .get("min_neighbors", v.min_neighbors)
      .finish();
}

void to_json(json& j, const DescriptorParams& v) {
  j = {{"radius", v.radius}, {"min_neighbors", v.min_neighbors}, {"elevation_scale", v.elevation_scale}};
}
void from_json(const json& j, DescriptorParams& v) {
  ObjectReader(j, "descriptor")
      .get("radius", v.radius)
      .get("min_neighbors", v.min_neighbors)
      .get("elevation_scale", v.elevation_scale)
      .finish();
}

void to_json(json& j, const FeatureParams& v) {
  j = {{"keypoints", v.keypoints}, {"descriptor", v.descriptor}, {"normal_k", v.normal_k}, {"viewpoint", v.viewpoint}};
}
void from_json(const json& j, FeatureParams& v) {
  ObjectReader(j, "features")
      .get("keypoints", v.keypoints)
      .get("descriptor", v.descriptor)
      .get("normal_k", v.normal_k)
      .get("viewpoint", v.viewpoint)
      .finish();
}

void to_json(json& j, const CoarseParams& v) {
  j = {{"features", v.features}, {"gc_epsilon", v.gc_epsilon}, {"min_inliers", v.min_inliers}};
}
void from_json(const json& j, CoarseParams& v) {
  ObjectReader(j, "coarse").get("features", v.features).get("gc_epsilon", v.gc_epsilon).get("min_inliers", v.min_inliers).finish();
}

void to_json(json& j, const HybridParams& v) {
  j = {{"alpha_start", v.alpha_start},
       {"alpha_steps", v.alpha_steps},
       {"coarse", v.coarse},
       {"icp", v.icp},
       {"keep_fraction", v.keep_fraction}};
}
void from_json(const json& j, HybridParams& v) {
  ObjectReader(j, "hybrid")
      .get("alpha_start", v.alpha_start)
      .get("alpha_steps", v.alpha_steps)
      .get("coarse", v.coarse)
      .get("icp", v.icp)
      .get("keep_fraction", v.keep_fraction)
      .finish();
}

void to_json(json& j, const MultiviewParams& v) {
  j = {{"features", v.features},
       {"gc_epsilon", v.gc_epsilon},
       {"coarse_pair_dist", v.coarse_pair_dist},
       {"fine_pair_dist", v.fine_pair_dist},
       {"icp_max_iter", v.icp_max_iter},
       {"icp_max_source_points", v.icp_max_source_points},
       {"min_overlap_ratio", v.min_overlap_ratio},
       {"max_overlap_rmse", v.max_overlap_rmse}};
}
void from_json(const json& j, MultiviewParams& v) {
  ObjectReader(j, "multiview")
      .get("features", v.features)
      .get("gc_epsilon", v.gc_epsilon)
      .get("coarse_pair_dist", v.coarse_pair_dist)
      .get("fine_pair_dist", v.fine_pair_dist)
      .get("icp_max_iter", v.icp_max_iter)
      .get("icp_max_source_points", v.icp_max_source_points)
      .get("min_overlap_ratio", v.min_overlap_ratio)
      .get("max_overlap_rmse", v.max_overlap_rmse)
      .finish();
}

void to_json(json& j, const ClothParams& v) {
  j = {{"grid_resolution", v.grid_resolution}, {"rigidness", v.rigidness}, {"time_step", v.time_step},
       {"class_threshold", v.class_threshold}, {"max_iterations", v.max_iterations}, {"gravity", v.gravity},
       {"tolerance", v.tolerance}};
}
void from_json(const json& j, ClothParams& v) {
  ObjectReader(j, "cloth")
      .get("grid_resolution", v.grid_resolution)
      .get("rigidness", v.rigidness)
      .get("time_step", v.time_step)
      .get("class_threshold", v.class_threshold)
      .get("max_iterations", v.max_iterations)
      .get("gravity", v.gravity)
      .get("tolerance", v.tolerance)
      .finish();
}

void to_json(json& j, const FilterParams& v) {
  j = {{"cell_size", v.cell_size}, {"margin", v.margin}, {"min_points", v.min_points}, {"cloth", v.cloth}};
}
void from_json(const json& j, FilterParams& v) {
  ObjectReader(j, "filter")
      .get("cell_size", v.cell_size)
      .get("margin", v.margin)
      .get("min_points", v.min_points)
      .get("cloth", v.cloth)
      .finish();
}

void to_json(json& j, const DtmParams& v) {
  j = {{"max_edge", distance_json(v.max_edge)}, {"projection_plane", nullptr}};
  if (v.projection_plane) j["projection_plane"] = *v.projection_plane;
}
void from_json(const json& j, DtmParams& v) {
  json plane;
  ObjectReader(j, "dtm").distance("max_edge", v.max_edge).get("projection_plane", plane).finish();
  if (plane.is_null()) {
    v.projection_plane.reset();
  } else {
    v.projection_plane = plane.get<Plane>();
  }
}

void to_json(json& j, const MeshDistanceParams& v) {
  j = {{"max_dist", distance_json(v.max_dist)}, {"mask_border", v.mask_border}};
}
void from_json(const json& j, MeshDistanceParams& v) {
  ObjectReader(j, "deformation").distance("max_dist", v.max_dist).get("mask_border", v.mask_border).finish();
}

void to_json(json& j, const TerrainParams& v) {
  j = {{"extent", v.extent},     {"mean_slope_deg", v.mean_slope_deg}, {"roughness", v.roughness},
       {"density", v.density},   {"seed", v.seed},                     {"sample_seed", v.sample_seed},
       {"wavelength", v.wavelength}, {"octaves", v.octaves},           {"origin", v.origin}};
}
void from_json(const json& j, TerrainParams& v) {
  ObjectReader(j, "terrain")
      .get("extent", v.extent)
      .get("mean_slope_deg", v.mean_slope_deg)
      .get("roughness", v.roughness)
      .get("density", v.density)
      .get("seed", v.seed)
      .get("sample_seed", v.sample_seed)
      .get("wavelength", v.wavelength)
      .get("octaves", v.octaves)
      .get("origin", v.origin)
      .finish();
}

void to_json(json& j, const VegetationParams& v) {
  j = {{"coverage", v.coverage},
       {"height_range", v.height_range},
       {"cluster_radius", v.cluster_radius},
       {"points_per_cluster", v.points_per_cluster},
       {"seed", v.seed}};
}
void from_json(const json& j, VegetationParams& v) {
  ObjectReader(j, "vegetation")
      .get("coverage", v.coverage)
      .get("height_range", v.height_range)
      .get("cluster_radius", v.cluster_radius)
      .get("points_per_cluster", v.points_per_cluster)
      .get("seed", v.seed)
      .finish();
}

void to_json(json& j, const StationParams& v) {
  j = {{"noise_sigma", v.noise_sigma},   {"max_range", v.max_range},       {"occlusion", v.occlusion},
       {"seed", v.seed},                 {"bin_deg", v.bin_deg},           {"splat_radius", v.splat_radius},
       {"depth_tolerance", v.depth_tolerance}};
}
void from_json(const json& j, StationParams& v) {
  ObjectReader(j, "stations")
      .get("noise_sigma", v.noise_sigma)
      .get("max_range", v.max_range)
      .get("occlusion", v.occlusion)
      .get("seed", v.seed)
      .get("bin_deg", v.bin_deg)
      .get("splat_radius", v.splat_radius)
      .get("depth_tolerance", v.depth_tolerance)
      .finish();
}

void to_json(json& j, const RegionSpec& v) {
  j = {{"center", v.center},
       {"radius_along", v.radius_along},
       {"radius_across", v.radius_across},
       {"depth_m", v.depth_m},
       {"azimuth_deg", v.azimuth_deg},
       {"shape", v.shape == RegionShape::Rectangle ? "rectangle" : "ellipse"},
       {"taper_m", v.taper_m},
       {"slide_fraction", v.slide_fraction}};
}
void from_json(const json& j, RegionSpec& v) {
  std::string shape = v.shape == RegionShape::Rectangle ? "rectangle" : "ellipse";
  ObjectReader(j, "landslide")
      .get("center", v.center)
      .get("radius_along", v.radius_along)
      .get("radius_across", v.radius_across)
      .get("depth_m", v.depth_m)
      .get("azimuth_deg", v.azimuth_deg)
      .get("shape", shape)
      .get("taper_m", v.taper_m)
      .get("slide_fraction", v.slide_fraction)
      .finish();
  if (shape == "rectangle") {
    v.shape = RegionShape::Rectangle;
  } else if (shape == "ellipse") {
    v.shape = RegionShape::Ellipse;
  } else {
    throw Error(ErrorCode::Parse, "landslide.shape must be 'ellipse' or 'rectangle'");
  }
}

void to_json(json& j, const RegistrationResult& v) {
  j = {{"transform", v.transform},
       {"rmse_m", v.rmse},
       {"iterations", v.iterations},
       {"converged", v.converged},
       {"inlier_count", v.inlier_count},
       {"objective_trace", v.objective_trace},
       {"alpha_trace", v.alpha_trace}};
}

void to_json(json& j, const ErrorBudget& v) {
  j = {{"m_tls_mm", v.m_tls},   {"m_mreg_mm", v.m_mreg}, {"m_treg_mm", v.m_treg},
       {"m_veg_mm", v.m_veg},   {"m_mesh_mm", v.m_mesh}, {"multiplicities", v.multiplicities}};
}
void from_json(const json& j, ErrorBudget& v) {
  ObjectReader(j, "budget")
      .get("m_tls_mm", v.m_tls)
      .get("m_mreg_mm", v.m_mreg)
      .get("m_treg_mm", v.m_treg)
      .get("m_veg_mm", v.m_veg)
      .get("m_mesh_mm", v.m_mesh)
      .get("multiplicities", v.multiplicities)
      .finish();
}

json regions_to_json(const std::vector<Region>& regions) {
  json out = json::array();
  for (const auto& r : regions) {
    out.push_back({{"id", r.id},
                   {"period", r.period},
                   {"area_m2", r.area_m2},
                   {"mean_rate_mm_day", r.mean_rate_mm_day},
                   {"volume_m3", r.volume_m3},
                   {"W_m", r.W_m},
                   {"L_m", r.L_m},
                   {"vertex_set", r.vertex_set}});
  }
  return {{"regions", out}};
}

std::vector<Region> regions_from_json(const json& doc) {
  std::vector<Region> out;
  try {
    for (const auto& j : doc.at("regions")) {
      Region r;
      r.id = j.at("id").get<int>();
      r.period = j.value("period", std::string());
      r.area_m2 = j.at("area_m2").get<double>();
      r.mean_rate_mm_day = j.at("mean_rate_mm_day").get<double>();
      r.volume_m3 = j.value("volume_m3", 0.0);
      r.W_m = j.value("W_m", 0.0);
      r.L_m = j.value("L_m", 0.0);
      r.vertex_set = j.at("vertex_set").get<std::vector<std::size_t>>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed regions document: ") + e.what());
  }
  return out;
}

}  // namespace tlsmon

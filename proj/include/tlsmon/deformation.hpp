#pragma once

#include "tlsmon/terrain.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace tlsmon {

struct DeformationField {
  std::vector<double> values;  // signed metres; + deposition, - erosion
  std::vector<std::uint8_t> valid;
  std::vector<Point3> offsets;  // compared vertex minus closest reference point
  double interval_days = 1.0;
  std::string compared_epoch;
  std::string reference_epoch;
};

struct MeshDistanceParams {
  double max_dist = 5.0;
  // Also reject vertices whose closest reference point lies on the mesh
  // border when they project outside the reference footprint or the offset
  // runs mostly along the projection plane.
  bool mask_border = true;
};

// Closest-point distance from every compared vertex to the reference
// surface, signed by the reference triangle normal (oriented along the
// projection-plane normal).
DeformationField mesh_distance(const TriangleMesh& compared, const TriangleMesh& reference,
                               const MeshDistanceParams& params, double interval_days);

// Exact closest point on triangle abc; `feature` is 0 for the interior,
// 1..3 for edges ab, bc, ca and 4..6 for vertices a, b, c.
Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b, const Point3& c, int* feature = nullptr);

struct FieldStats {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t valid_count = 0;
};

// Over valid vertices; throws EmptyInput when none are valid.
FieldStats field_stats(const DeformationField& field);
// Over every finite value, ignoring the validity mask.
FieldStats field_stats_unmasked(const DeformationField& field);

// 1000 * |value| / interval_days in mm/day; NaN where invalid.
std::vector<double> rate_field(const DeformationField& field);

struct Region {
  int id = 0;
  std::string period;  // "reference,compared" epoch ids when known
  std::vector<std::size_t> vertex_set;  // sorted
  double area_m2 = 0.0;
  double mean_rate_mm_day = 0.0;
  double volume_m3 = 0.0;
  double W_m = 0.0;
  double L_m = 0.0;
};

// Per-vertex share (one third) of the projected area of incident triangles.
std::vector<double> vertex_areas(const TriangleMesh& mesh);

// Connected components (mesh edges) of vertices with rate > threshold; kept
// when area >= min_area, sorted by area descending, ids from 1.
std::vector<Region> significant_regions(const TriangleMesh& mesh, const std::vector<double>& rates,
                                        double threshold_mm_day, double min_area_m2);

// Sum over triangles with all three vertices in the region of projected area
// times the mean |value| of their valid vertices.
double region_volume(const Region& region, const DeformationField& field, const TriangleMesh& mesh);

// PLY of the compared mesh with vertex channels displacement_m, rate_mm_day
// (NaN where invalid), valid and offset_x/y/z. Interval and epoch ids travel
// as header comments.
std::string write_field_mesh(const TriangleMesh& compared, const DeformationField& field);

struct FieldMesh {
  TriangleMesh mesh;  // without the field channels
  DeformationField field;
};
FieldMesh parse_field_mesh(std::string_view bytes);

}  // namespace tlsmon

#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/cloud_ops.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tlsmon {

using Triangle = std::array<int, 3>;

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<Triangle> triangles;  // counter-clockwise seen from projection_plane.normal
  Plane projection_plane;
  std::map<std::string, std::vector<double>> scalars;  // per vertex
  std::size_t dropped_duplicates = 0;
  std::vector<std::size_t> source_indices;  // input point of each vertex
  Point3 origin_shift = Point3::Zero();  // as for PointCloud
};

// Express `mesh` relative to `origin_shift` (vertices and plane offset).
void rebase(TriangleMesh& mesh, const Point3& origin_shift);

// Planar Delaunay triangulation. Points equal to an earlier point are skipped
// and counted; all-collinear input throws DegenerateSurface.
struct Delaunay2D {
  std::vector<Triangle> triangles;  // indices into the input, counter-clockwise
  std::vector<std::size_t> duplicates;  // input indices skipped
};
Delaunay2D delaunay_2d(const std::vector<Eigen::Vector2d>& points);

struct DtmParams {
  std::optional<Plane> projection_plane;  // default: best-fit plane of the cloud
  double max_edge = 2.0;  // triangles with a longer 3-D edge are dropped
};

// TIN over the cloud projected onto the plane; vertices keep their 3-D
// coordinates (duplicates in projection are removed from the vertex list).
TriangleMesh build_dtm(const PointCloud& ground, const DtmParams& params = {});

// 2-D coordinates of p in the plane basis (plane_basis(normal)).
Eigen::Vector2d project_to_plane(const Plane& plane, const Point3& p);
double projected_area(const TriangleMesh& mesh, const Triangle& t);

// Binary PLY with vertex scalars, a face list and the projection plane in a
// comment line.
std::string write_mesh(const TriangleMesh& mesh);
TriangleMesh parse_mesh(std::string_view bytes);
void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh load_mesh(const std::filesystem::path& path);

}  // namespace tlsmon

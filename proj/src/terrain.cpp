#include "tlsmon/terrain.hpp"

#include "tlsmon/cloud_io.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace tlsmon {
namespace {

constexpr int kGhost = -1;

using Vec2 = Eigen::Vector2d;

long double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return static_cast<long double>(b.x() - a.x()) * (c.y() - a.y()) -
         static_cast<long double>(b.y() - a.y()) * (c.x() - a.x());
}

long double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const long double adx = a.x() - d.x(), ady = a.y() - d.y();
  const long double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const long double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const long double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

std::uint64_t hilbert_key(std::uint32_t x, std::uint32_t y) {
  std::uint64_t d = 0;
  for (std::uint32_t s = 1u << 15; s > 0; s >>= 1) {
    const std::uint32_t rx = (x & s) ? 1 : 0, ry = (y & s) ? 1 : 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

struct Tri {
  std::array<int, 3> v;
  std::array<int, 3> n{-1, -1, -1};  // neighbour across the edge opposite v[i]
  bool alive = true;
};

class Triangulator {
 public:
  explicit Triangulator(const std::vector<Vec2>& pts) : p_(pts) {}

  Delaunay2D run() {
    Delaunay2D out;
    const auto n = p_.size();
    if (n < 3) throw Error(ErrorCode::DegenerateSurface, "need at least 3 points to triangulate");
    Vec2 lo = p_[0], hi = p_[0];
    for (const auto& q : p_) {
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
    }
    const Vec2 span = (hi - lo).cwiseMax(Vec2::Constant(1e-300));
    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 r = (p_[i] - lo).cwiseQuotient(span) * 65535.0;
      keys[i] = hilbert_key(static_cast<std::uint32_t>(r.x()), static_cast<std::uint32_t>(r.y()));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });

    tris_.reserve(2 * n + 8);
    // Seed triangle: the first non-collinear triple in insertion order.
    const std::size_t a = order[0];
    std::size_t b = n, c = n;
    for (std::size_t k = 1; k < n && b == n; ++k) {
      if (p_[order[k]] != p_[a]) b = order[k];
    }
    if (b == n) throw Error(ErrorCode::DegenerateSurface, "all points coincide in projection");
    for (std::size_t k = 1; k < n && c == n; ++k) {
      if (orient(p_[a], p_[b], p_[order[k]]) != 0) c = order[k];
    }
    if (c == n) throw Error(ErrorCode::DegenerateSurface, "all points are collinear in projection");
    seed(static_cast<int>(a), static_cast<int>(b), static_cast<int>(c));

    for (auto i : order) {
      if (i == a || i == b || i == c) continue;
      if (!insert(static_cast<int>(i))) out.duplicates.push_back(i);
    }
    std::sort(out.duplicates.begin(), out.duplicates.end());
    for (const auto& t : tris_) {
      if (t.alive && !ghost(t)) out.triangles.push_back({t.v[0], t.v[1], t.v[2]});
    }
    return out;
  }

 private:
  static bool ghost(const Tri& t) { return t.v[0] == kGhost || t.v[1] == kGhost || t.v[2] == kGhost; }

  // Ghost triangle (u, w, G) in cyclic order.
  static std::pair<int, int> ghost_edge(const Tri& t) {
    const int g = t.v[0] == kGhost ? 0 : t.v[1] == kGhost ? 1 : 2;
    return {t.v[(g + 1) % 3], t.v[(g + 2) % 3]};
  }

  bool conflict(const Tri& t, const Vec2& q) const {
    if (!ghost(t)) return incircle(p_[t.v[0]], p_[t.v[1]], p_[t.v[2]], q) > 0;
    const auto [u, w] = ghost_edge(t);
    const long double o = orient(p_[u], p_[w], q);
    if (o > 0) return true;
    if (o < 0) return false;
    const Vec2 d = p_[w] - p_[u];
    const double s = (q - p_[u]).dot(d);
    return s > 0 && s < d.squaredNorm();
  }

  int add(const std::array<int, 3>& v) {
    Tri t;
    t.v = v;
    if (!free_.empty()) {
      const int id = free_.back();
      free_.pop_back();
      tris_[id] = t;
      return id;
    }
    tris_.push_back(t);
    return static_cast<int>(tris_.size()) - 1;
  }

  void seed(int a, int b, int c) {
    if (orient(p_[a], p_[b], p_[c]) < 0) std::swap(b, c);
    const int t0 = add({a, b, c});
    const int g0 = add({b, a, kGhost});  // across a-b
    const int g1 = add({c, b, kGhost});  // across b-c
    const int g2 = add({a, c, kGhost});  // across c-a
    tris_[t0].n = {g1, g2, g0};
    // Ghost (u, w, G): n[0] across (w, G), n[1] across (G, u), n[2] across (u, w).
    tris_[g0].n = {g2, g1, t0};
    tris_[g1].n = {g0, g2, t0};
    tris_[g2].n = {g1, g0, t0};
    last_ = t0;
  }

  int locate(const Vec2& q) {
    int t = last_;
    if (!tris_[t].alive) {
      t = 0;
      while (!tris_[t].alive) ++t;
    }
    if (ghost(tris_[t])) {
      const int g = tris_[t].v[0] == kGhost ? 0 : tris_[t].v[1] == kGhost ? 1 : 2;
      t = tris_[t].n[g];
    }
    for (std::size_t steps = 0; steps < 4 * tris_.size() + 16; ++steps) {
      const Tri& tri = tris_[t];
      if (ghost(tri)) return t;
      bool inside = true;
      ++rotation_;
      for (int k = 0; k < 3; ++k) {
        const int i = static_cast<int>((k + rotation_) % 3);
        if (orient(p_[tri.v[(i + 1) % 3]], p_[tri.v[(i + 2) % 3]], q) < 0) {
          t = tri.n[i];
          inside = false;
          break;
        }
      }
      if (inside) return t;
    }
    // Fallback: exhaustive search for a conflicting triangle.
    for (std::size_t k = 0; k < tris_.size(); ++k) {
      if (tris_[k].alive && conflict(tris_[k], q)) return static_cast<int>(k);
    }
    throw Error(ErrorCode::DegenerateSurface, "point location failed");
  }

  bool insert(int pi) {
    const Vec2& q = p_[pi];
    const int start = locate(q);
    for (int v : tris_[start].v) {
      if (v != kGhost && p_[v] == q) return false;
    }
    if (!conflict(tris_[start], q)) {
      // q on the boundary of a non-conflicting triangle: find one that conflicts.
      bool found = false;
      for (int nb : tris_[start].n) {
        if (conflict(tris_[nb], q)) {
          found = true;
          cavity_seed_ = nb;
          break;
        }
      }
      if (!found) throw Error(ErrorCode::DegenerateSurface, "no conflicting triangle for insertion");
    } else {
      cavity_seed_ = start;
    }

    ++stamp_;
    if (mark_.size() < tris_.size()) mark_.resize(tris_.size(), 0);
    std::vector<int> cavity{cavity_seed_};
    mark_[cavity_seed_] = stamp_;
    struct Edge {
      int a, b, outside;
    };
    std::vector<Edge> boundary;
    for (std::size_t k = 0; k < cavity.size(); ++k) {
      const int t = cavity[k];
      for (int i = 0; i < 3; ++i) {
        const int nb = tris_[t].n[i];
        if (mark_[nb] == stamp_) continue;
        if (conflict(tris_[nb], q)) {
          mark_[nb] = stamp_;
          cavity.push_back(nb);
        } else {
          boundary.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], nb});
        }
      }
    }
    // Triangles absorbed later can leave stale boundary entries; keep only
    // edges whose outside triangle is not in the cavity.
    std::erase_if(boundary, [&](const Edge& e) { return mark_[e.outside] == stamp_; });
    for (int t : cavity) {
      tris_[t].alive = false;
      free_.push_back(t);
    }

    std::unordered_map<int, int> by_first, by_second;
    std::vector<int> created;
    for (const auto& e : boundary) {
      const int id = add({e.a, e.b, pi});
      if (mark_.size() < tris_.size()) mark_.resize(tris_.size(), 0);
      mark_[id] = 0;
      tris_[id].n[2] = e.outside;
      auto& o = tris_[e.outside];
      for (int j = 0; j < 3; ++j) {
        if (o.v[(j + 1) % 3] == e.b && o.v[(j + 2) % 3] == e.a) o.n[j] = id;
      }
      by_first[e.a] = id;
      by_second[e.b] = id;
      created.push_back(id);
    }
    for (int id : created) {
      auto& t = tris_[id];
      t.n[0] = by_first.at(t.v[1]);
      t.n[1] = by_second.at(t.v[0]);
    }
    last_ = created.front();
    for (int id : created) {
      if (!ghost(tris_[id])) {
        last_ = id;
        break;
      }
    }
    return true;
  }

  const std::vector<Vec2>& p_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<unsigned> mark_;
  unsigned stamp_ = 0;
  int last_ = 0;
  int cavity_seed_ = 0;
  unsigned long rotation_ = 0;
};

}  // namespace

Delaunay2D delaunay_2d(const std::vector<Eigen::Vector2d>& points) {
  if (points.size() < 3) throw Error(ErrorCode::DegenerateSurface, "need at least 3 points to triangulate");
  // Work relative to the bounding-box centre to keep predicates well scaled.
  Vec2 lo = points[0], hi = points[0];
  for (const auto& q : points) {
    if (!q.allFinite()) throw Error(ErrorCode::Parameter, "non-finite point in triangulation input");
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec2 mid = (lo + hi) / 2;
  std::vector<Vec2> local(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) local[i] = points[i] - mid;
  Triangulator tri(local);
  return tri.run();
}

Eigen::Vector2d project_to_plane(const Plane& plane, const Point3& p) {
  const auto [e1, e2] = plane_basis(plane.normal);
  return {p.dot(e1), p.dot(e2)};
}

double projected_area(const TriangleMesh& mesh, const Triangle& t) {
  const Point3& a = mesh.vertices[t[0]];
  const Point3 cr = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
  return 0.5 * std::abs(cr.dot(mesh.projection_plane.normal));
}

void rebase(TriangleMesh& mesh, const Point3& origin_shift) {
  const Point3 delta = mesh.origin_shift - origin_shift;
  for (auto& v : mesh.vertices) v += delta;
  mesh.projection_plane.offset += mesh.projection_plane.normal.dot(delta);
  mesh.origin_shift = origin_shift;
}

TriangleMesh build_dtm(const PointCloud& ground, const DtmParams& params) {
  if (ground.size() < 3) throw Error(ErrorCode::DegenerateSurface, "DTM needs at least 3 points");
  if (!(params.max_edge > 0)) throw Error(ErrorCode::Parameter, "max_edge must be positive");
  TriangleMesh mesh;
  mesh.projection_plane = params.projection_plane ? *params.projection_plane : fit_plane(ground.points).plane;
  mesh.origin_shift = ground.origin_shift;
  const auto [e1, e2] = plane_basis(mesh.projection_plane.normal);
  std::vector<Eigen::Vector2d> flat(ground.size());
  for (std::size_t i = 0; i < ground.size(); ++i) flat[i] = {ground.points[i].dot(e1), ground.points[i].dot(e2)};
  const auto tri = delaunay_2d(flat);

  std::vector<int> remap(ground.size(), -1);
  std::size_t d = 0;
  for (std::size_t i = 0; i < ground.size(); ++i) {
    if (d < tri.duplicates.size() && tri.duplicates[d] == i) {
      ++d;
      continue;
    }
    remap[i] = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(ground.points[i]);
    mesh.source_indices.push_back(i);
  }
  mesh.dropped_duplicates = tri.duplicates.size();
  for (const auto& [name, values] : ground.scalars) {
    auto& dst = mesh.scalars[name];
    for (auto i : mesh.source_indices) dst.push_back(values[i]);
  }
  const double max2 = params.max_edge * params.max_edge;
  for (const auto& t : tri.triangles) {
    const Point3 &a = ground.points[t[0]], &b = ground.points[t[1]], &c = ground.points[t[2]];
    if ((a - b).squaredNorm() > max2 || (b - c).squaredNorm() > max2 || (c - a).squaredNorm() > max2) continue;
    mesh.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  }
  return mesh;
}

std::string write_mesh(const TriangleMesh& mesh) {
  PlyData ply;
  ply.vertex_property_names = {"x", "y", "z"};
  ply.vertex_columns.assign(3, std::vector<double>(mesh.vertices.size()));
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Point3 p = mesh.vertices[i] + mesh.origin_shift;
    for (int k = 0; k < 3; ++k) ply.vertex_columns[k][i] = p[k];
  }
  for (const auto& [name, values] : mesh.scalars) {
    if (values.size() != mesh.vertices.size()) throw Error(ErrorCode::Parameter, "scalar " + name + " is misaligned");
    ply.vertex_property_names.push_back(name);
    ply.vertex_columns.push_back(values);
  }
  ply.faces = mesh.triangles;
  const auto& pl = mesh.projection_plane;
  std::ostringstream os;
  os.precision(17);
  os << "projection_plane " << pl.normal.x() << ' ' << pl.normal.y() << ' ' << pl.normal.z() << ' '
     << pl.offset + pl.normal.dot(mesh.origin_shift);
  ply.comments.push_back(os.str());
  return write_ply(ply);
}

TriangleMesh parse_mesh(std::string_view bytes) {
  // Vertex channels and the origin shift come from the cloud reader.
  const PointCloud cloud = parse_cloud(bytes, CloudFormat::Ply);
  const PlyData ply = parse_ply(bytes);
  TriangleMesh mesh;
  mesh.vertices = cloud.points;
  mesh.origin_shift = cloud.origin_shift;
  mesh.scalars = cloud.scalars;
  mesh.triangles = ply.faces;
  for (const auto& t : mesh.triangles) {
    for (int v : t) {
      if (v < 0 || static_cast<std::size_t>(v) >= mesh.vertices.size()) {
        throw Error(ErrorCode::Format, "face index out of range");
      }
    }
  }
  bool have_plane = false;
  for (const auto& c : ply.comments) {
    std::istringstream is(c);
    std::string tag;
    Point3 n;
    double offset;
    if (is >> tag && tag == "projection_plane" && is >> n.x() >> n.y() >> n.z() >> offset) {
      mesh.projection_plane.normal = n.normalized();
      mesh.projection_plane.offset = offset - mesh.projection_plane.normal.dot(mesh.origin_shift);
      have_plane = true;
    }
  }
  if (!have_plane) {
    if (mesh.vertices.size() < 3) throw Error(ErrorCode::DegenerateSurface, "mesh has fewer than 3 vertices");
    mesh.projection_plane = fit_plane(mesh.vertices).plane;
  }
  mesh.source_indices.resize(mesh.vertices.size());
  std::iota(mesh.source_indices.begin(), mesh.source_indices.end(), std::size_t{0});
  return mesh;
}

void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) { write_file(path, write_mesh(mesh)); }

TriangleMesh load_mesh(const std::filesystem::path& path) { return parse_mesh(read_file(path)); }

}  // namespace tlsmon

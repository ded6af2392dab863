#include "tlsmon/deformation.hpp"

#include "tlsmon/cloud_io.hpp"
#include "tlsmon/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace tlsmon {
namespace {

class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh) : mesh_(mesh), order_(mesh.triangles.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
      centroids_.push_back((mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0);
    }
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
  }

  struct Hit {
    int triangle = -1;
    Point3 point = Point3::Zero();
    double distance2 = std::numeric_limits<double>::infinity();
    int feature = 0;
  };

  Hit closest(const Point3& p) const {
    Hit best;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (node.box.squaredExteriorDistance(p) >= best.distance2) continue;
      if (node.left < 0) {
        for (int k = node.begin; k < node.end; ++k) {
          const int ti = order_[k];
          const auto& t = mesh_.triangles[ti];
          int feature = 0;
          const Point3 q = closest_point_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                     mesh_.vertices[t[2]], &feature);
          const double d2 = (p - q).squaredNorm();
          if (d2 < best.distance2 || (d2 == best.distance2 && ti < best.triangle)) {
            best = {ti, q, d2, feature};
          }
        }
        continue;
      }
      const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
      const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
      if (dl <= dr) {
        stack.push_back(node.right);
        stack.push_back(node.left);
      } else {
        stack.push_back(node.left);
        stack.push_back(node.right);
      }
    }
    return best;
  }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1, begin = 0, end = 0;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Eigen::AlignedBox3d box, cbox;
    for (int k = begin; k < end; ++k) {
      const auto& t = mesh_.triangles[order_[k]];
      for (int v : t) box.extend(mesh_.vertices[v]);
      cbox.extend(centroids_[order_[k]]);
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= 4) return id;
    int axis;
    cbox.sizes().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
      if (centroids_[a][axis] != centroids_[b][axis]) return centroids_[a][axis] < centroids_[b][axis];
      return a < b;
    });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const TriangleMesh& mesh_;
  std::vector<int> order_;
  std::vector<Point3> centroids_;
  std::vector<Node> nodes_;
};

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

FieldStats two_pass(const std::vector<double>& values, const std::vector<std::uint8_t>* valid) {
  FieldStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((valid && !(*valid)[i]) || !std::isfinite(values[i])) continue;
    sum += values[i];
    ++s.valid_count;
  }
  if (s.valid_count == 0) throw Error(ErrorCode::EmptyInput, "deformation field has no valid values");
  s.mean = sum / static_cast<double>(s.valid_count);
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((valid && !(*valid)[i]) || !std::isfinite(values[i])) continue;
    sq += (values[i] - s.mean) * (values[i] - s.mean);
  }
  s.std = std::sqrt(sq / static_cast<double>(s.valid_count));
  return s;
}

}  // namespace

Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b, const Point3& c, int* feature) {
  auto set = [&](int f) {
    if (feature) *feature = f;
  };
  const Point3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) {
    set(4);
    return a;
  }
  const Point3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) {
    set(5);
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    set(1);
    return a + ab * (d1 / (d1 - d3));
  }
  const Point3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) {
    set(6);
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    set(3);
    return a + ac * (d2 / (d2 - d6));
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    set(2);
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  set(0);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

DeformationField mesh_distance(const TriangleMesh& compared, const TriangleMesh& reference,
                               const MeshDistanceParams& params, double interval_days) {
  if (reference.triangles.empty()) throw Error(ErrorCode::EmptyInput, "reference mesh has no triangles");
  if (!(interval_days > 0)) throw Error(ErrorCode::Parameter, "interval_days must be positive");
  if (!(params.max_dist > 0)) throw Error(ErrorCode::Parameter, "max_dist must be positive");

  std::unordered_map<std::uint64_t, int> edge_use;
  for (const auto& t : reference.triangles) {
    for (int i = 0; i < 3; ++i) ++edge_use[edge_key(t[i], t[(i + 1) % 3])];
  }
  std::vector<std::uint8_t> border_vertex(reference.vertices.size(), 0);
  for (const auto& [key, count] : edge_use) {
    if (count != 1) continue;
    border_vertex[key >> 32] = 1;
    border_vertex[key & 0xffffffffULL] = 1;
  }

  // Triangles around each reference vertex, for the footprint test at the border.
  std::vector<std::vector<std::uint32_t>> ring;
  if (params.mask_border) {
    ring.resize(reference.vertices.size());
    for (std::size_t k = 0; k < reference.triangles.size(); ++k) {
      for (int v : reference.triangles[k]) ring[v].push_back(static_cast<std::uint32_t>(k));
    }
  }

  const TriangleBvh bvh(reference);
  const Point3 plane_n = reference.projection_plane.normal;
  const auto [e1, e2] = plane_basis(plane_n);
  auto in_footprint = [&](const Point3& p, std::initializer_list<int> around) {
    const Eigen::Vector2d q(p.dot(e1), p.dot(e2));
    for (int v : around) {
      for (auto k : ring[v]) {
        const auto& tri = reference.triangles[k];
        Eigen::Vector2d c[3];
        for (int j = 0; j < 3; ++j) c[j] = {reference.vertices[tri[j]].dot(e1), reference.vertices[tri[j]].dot(e2)};
        const double area = (c[1] - c[0]).x() * (c[2] - c[0]).y() - (c[1] - c[0]).y() * (c[2] - c[0]).x();
        if (area == 0) continue;
        bool inside = true;
        for (int j = 0; j < 3 && inside; ++j) {
          const Eigen::Vector2d a = c[j], b = c[(j + 1) % 3];
          const double side = (b - a).x() * (q - a).y() - (b - a).y() * (q - a).x();
          inside = side * area >= -1e-12 * std::abs(area);
        }
        if (inside) return true;
      }
    }
    return false;
  };
  const Point3 delta = compared.origin_shift - reference.origin_shift;
  DeformationField field;
  field.interval_days = interval_days;
  const auto n = compared.vertices.size();
  field.values.resize(n);
  field.valid.resize(n);
  field.offsets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point3 p = compared.vertices[i] + delta;
    const auto hit = bvh.closest(p);
    const auto& t = reference.triangles[hit.triangle];
    Point3 tn = (reference.vertices[t[1]] - reference.vertices[t[0]]).cross(reference.vertices[t[2]] - reference.vertices[t[0]]);
    if (tn.dot(plane_n) < 0) tn = -tn;
    const Point3 offset = p - hit.point;
    const double dist = std::sqrt(hit.distance2);
    field.offsets[i] = offset;
    field.values[i] = offset.dot(tn) < 0 ? -dist : dist;
    bool valid = dist <= params.max_dist;
    if (valid && params.mask_border && hit.feature != 0) {
      bool on_border, inside;
      if (hit.feature >= 4) {
        const int v = t[hit.feature - 4];
        on_border = border_vertex[v] != 0;
        inside = on_border && in_footprint(p, {v});
      } else {
        const int e = hit.feature - 1;
        on_border = edge_use[edge_key(t[e], t[(e + 1) % 3])] == 1;
        inside = on_border && in_footprint(p, {t[e], t[(e + 1) % 3]});
      }
      if (on_border) {
        // Outside the reference footprint there is nothing to compare against.
        const double normal_part = offset.dot(plane_n);
        const double in_plane = (offset - normal_part * plane_n).norm();
        valid = inside && in_plane <= std::abs(normal_part);
      }
    }
    field.valid[i] = valid;
  }
  return field;
}

FieldStats field_stats(const DeformationField& field) { return two_pass(field.values, &field.valid); }

FieldStats field_stats_unmasked(const DeformationField& field) { return two_pass(field.values, nullptr); }

std::vector<double> rate_field(const DeformationField& field) {
  if (!(field.interval_days > 0)) throw Error(ErrorCode::Parameter, "interval_days must be positive");
  std::vector<double> rates(field.values.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (field.valid[i] && std::isfinite(field.values[i])) rates[i] = 1000.0 * std::abs(field.values[i]) / field.interval_days;
  }
  return rates;
}

std::vector<double> vertex_areas(const TriangleMesh& mesh) {
  std::vector<double> area(mesh.vertices.size(), 0.0);
  for (const auto& t : mesh.triangles) {
    const double a = projected_area(mesh, t) / 3.0;
    for (int v : t) area[v] += a;
  }
  return area;
}

std::vector<Region> significant_regions(const TriangleMesh& mesh, const std::vector<double>& rates,
                                        double threshold_mm_day, double min_area_m2) {
  const auto n = mesh.vertices.size();
  if (rates.size() != n) throw Error(ErrorCode::Parameter, "rates are not aligned with mesh vertices");
  std::vector<std::uint8_t> hot(n);
  for (std::size_t i = 0; i < n; ++i) hot[i] = std::isfinite(rates[i]) && rates[i] > threshold_mm_day;

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      const auto a = static_cast<std::size_t>(t[i]), b = static_cast<std::size_t>(t[(i + 1) % 3]);
      if (!hot[a] || !hot[b]) continue;
      const auto ra = find(a), rb = find(b);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
  const auto area = vertex_areas(mesh);
  std::unordered_map<std::size_t, std::size_t> slot;
  std::vector<Region> regions;
  for (std::size_t i = 0; i < n; ++i) {
    if (!hot[i]) continue;
    const auto root = find(i);
    auto [it, inserted] = slot.try_emplace(root, regions.size());
    if (inserted) regions.emplace_back();
    auto& r = regions[it->second];
    r.vertex_set.push_back(i);
    r.area_m2 += area[i];
    r.mean_rate_mm_day += rates[i];
  }
  std::vector<Region> kept;
  for (auto& r : regions) {
    r.mean_rate_mm_day /= static_cast<double>(r.vertex_set.size());
    if (r.area_m2 >= min_area_m2 && r.area_m2 > 0) kept.push_back(std::move(r));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Region& a, const Region& b) { return a.area_m2 > b.area_m2; });
  for (std::size_t k = 0; k < kept.size(); ++k) kept[k].id = static_cast<int>(k + 1);
  return kept;
}

double region_volume(const Region& region, const DeformationField& field, const TriangleMesh& mesh) {
  if (field.values.size() != mesh.vertices.size()) throw Error(ErrorCode::Parameter, "field is not aligned with mesh");
  std::vector<std::uint8_t> member(mesh.vertices.size(), 0);
  for (auto v : region.vertex_set) {
    if (v >= member.size()) throw Error(ErrorCode::Parameter, "region vertex out of range");
    member[v] = 1;
  }
  double volume = 0.0;
  for (const auto& t : mesh.triangles) {
    if (!member[t[0]] || !member[t[1]] || !member[t[2]]) continue;
    double sum = 0.0;
    int count = 0;
    for (int v : t) {
      if (!field.valid[v] || !std::isfinite(field.values[v])) continue;
      sum += std::abs(field.values[v]);
      ++count;
    }
    if (count > 0) volume += projected_area(mesh, t) * sum / count;
  }
  return volume;
}

namespace {

const char* const kOffsetNames[3] = {"offset_x", "offset_y", "offset_z"};

}  // namespace

std::string write_field_mesh(const TriangleMesh& compared, const DeformationField& field) {
  const std::size_t n = compared.vertices.size();
  if (field.values.size() != n || field.valid.size() != n || field.offsets.size() != n) {
    throw Error(ErrorCode::Parameter, "field does not match the mesh");
  }
  TriangleMesh mesh = compared;
  mesh.scalars["displacement_m"] = field.values;
  mesh.scalars["rate_mm_day"] = rate_field(field);
  mesh.scalars["valid"] = std::vector<double>(field.valid.begin(), field.valid.end());
  for (int k = 0; k < 3; ++k) {
    auto& col = mesh.scalars[kOffsetNames[k]];
    col.resize(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = field.offsets[i][k];
  }
  PlyData ply = parse_ply(write_mesh(mesh));
  std::ostringstream os;
  os.precision(17);
  os << "interval_days " << field.interval_days;
  ply.comments.push_back(os.str());
  if (!field.reference_epoch.empty() || !field.compared_epoch.empty()) {
    ply.comments.push_back("epochs " + (field.reference_epoch.empty() ? "-" : field.reference_epoch) + ' ' +
                           (field.compared_epoch.empty() ? "-" : field.compared_epoch));
  }
  return write_ply(ply);
}

FieldMesh parse_field_mesh(std::string_view bytes) {
  FieldMesh out;
  out.mesh = parse_mesh(bytes);
  auto& sc = out.mesh.scalars;
  const std::size_t n = out.mesh.vertices.size();
  auto take = [&](const char* name) {
    auto it = sc.find(name);
    if (it == sc.end()) throw Error(ErrorCode::Format, std::string("field mesh lacks channel ") + name);
    std::vector<double> v = std::move(it->second);
    sc.erase(it);
    return v;
  };
  auto& f = out.field;
  f.values = take("displacement_m");
  const auto valid = take("valid");
  f.valid.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.valid[i] = valid[i] != 0;
  sc.erase("rate_mm_day");
  f.offsets.assign(n, Point3::Zero());
  if (sc.count(kOffsetNames[0])) {
    for (int k = 0; k < 3; ++k) {
      const auto col = take(kOffsetNames[k]);
      for (std::size_t i = 0; i < n; ++i) f.offsets[i][k] = col[i];
    }
  }
  bool have_interval = false;
  for (const auto& c : parse_ply(bytes).comments) {
    std::istringstream is(c);
    std::string tag;
    is >> tag;
    if (tag == "interval_days") {
      have_interval = static_cast<bool>(is >> f.interval_days);
    } else if (tag == "epochs") {
      is >> f.reference_epoch >> f.compared_epoch;
      if (f.reference_epoch == "-") f.reference_epoch.clear();
      if (f.compared_epoch == "-") f.compared_epoch.clear();
    }
  }
  if (!have_interval || !(f.interval_days > 0)) throw Error(ErrorCode::Format, "field mesh lacks a positive interval_days");
  return out;
}

}  // namespace tlsmon

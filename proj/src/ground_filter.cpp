#include "tlsmon/ground_filter.hpp"

#include "tlsmon/error.hpp"
#include "tlsmon/spatial_index.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <map>
#include <unordered_set>

namespace tlsmon {
namespace {

constexpr double kDamping = 0.01;

using CellKey = std::array<long, 2>;

CellKey cell_of(const Point3& p, double cell) {
  return {static_cast<long>(std::floor(p.x() / cell)), static_cast<long>(std::floor(p.y() / cell))};
}

void count_labels(GroundLabeling& out) {
  out.ground_count = static_cast<std::size_t>(std::count(out.labels.begin(), out.labels.end(), Label::Ground));
  out.vegetation_count = out.labels.size() - out.ground_count;
}

}  // namespace

std::vector<SubSlope> partition_subslopes(const PointCloud& cloud, double cell_size, std::size_t min_points,
                                          double margin) {
  if (!(cell_size > 0)) throw Error(ErrorCode::Parameter, "cell_size must be positive");
  if (min_points < 3) throw Error(ErrorCode::Parameter, "min_points must be at least 3");
  if (margin < 0) throw Error(ErrorCode::Parameter, "margin must be non-negative");
  if (cloud.size() < min_points) {
    throw Error(ErrorCode::TooSparse, std::to_string(cloud.size()) + " points, need " + std::to_string(min_points));
  }
  std::map<CellKey, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) cells[cell_of(cloud.points[i], cell_size)].push_back(i);

  std::map<CellKey, std::vector<std::size_t>> core;
  for (const auto& [key, idx] : cells) {
    if (idx.size() >= min_points) core[key] = idx;
  }
  if (core.empty()) {
    auto biggest = cells.begin();
    for (auto it = cells.begin(); it != cells.end(); ++it) {
      if (it->second.size() > biggest->second.size()) biggest = it;
    }
    core[biggest->first] = biggest->second;
  }
  for (const auto& [key, idx] : cells) {
    if (core.count(key)) continue;
    const CellKey* nearest = nullptr;
    long best = 0;
    for (const auto& [ck, unused] : core) {
      const long dx = ck[0] - key[0], dy = ck[1] - key[1];
      const long d2 = dx * dx + dy * dy;
      if (!nearest || d2 < best) {
        nearest = &ck;
        best = d2;
      }
    }
    auto& dst = core[*nearest];
    dst.insert(dst.end(), idx.begin(), idx.end());
  }

  std::map<CellKey, std::vector<std::size_t>> members = core;
  if (margin > 0) {
    const long reach = static_cast<long>(std::ceil(margin / cell_size));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      const CellKey own = cell_of(p, cell_size);
      for (long dx = -reach; dx <= reach; ++dx) {
        for (long dy = -reach; dy <= reach; ++dy) {
          const CellKey k{own[0] + dx, own[1] + dy};
          if ((dx == 0 && dy == 0) || !core.count(k)) continue;
          const double x0 = static_cast<double>(k[0]) * cell_size - margin, x1 = x0 + cell_size + 2 * margin;
          const double y0 = static_cast<double>(k[1]) * cell_size - margin, y1 = y0 + cell_size + 2 * margin;
          if (p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1) members[k].push_back(i);
        }
      }
    }
  }

  std::vector<SubSlope> out;
  std::vector<Point3> pts;
  for (auto& [key, idx] : members) {
    pts.clear();
    for (auto i : core[key]) pts.push_back(cloud.points[i]);
    const auto fit = fit_plane(pts);
    SubSlope s;
    s.cell_id = key;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    s.member_indices = std::move(idx);
    s.plane = fit.plane;
    s.centroid = fit.centroid;
    s.level_rotation = leveling_rotation(fit.plane.normal);
    out.push_back(std::move(s));
  }
  return out;
}

RigidTransform leveling_rotation(const Point3& normal) {
  RigidTransform t;
  t.rotation = Eigen::Quaterniond::FromTwoVectors(normal, Point3::UnitZ()).toRotationMatrix();
  return t;
}

LeveledCloud level_subslope(const SubSlope& sub, const PointCloud& cloud) {
  const Point3& n = sub.plane.normal;
  if (!n.allFinite() || std::abs(n.norm() - 1.0) > 1e-9) throw Error(ErrorCode::Parameter, "sub-slope plane is invalid");
  if (sub.member_indices.empty()) throw Error(ErrorCode::EmptyInput, "sub-slope has no members");
  LeveledCloud out;
  out.centroid = sub.centroid;
  out.rotation = sub.level_rotation;
  out.cloud = select(cloud, sub.member_indices);
  for (auto& p : out.cloud.points) p = out.rotation.apply(p - out.centroid) + out.centroid;
  if (out.cloud.normals) {
    for (auto& v : *out.cloud.normals) v = out.rotation.apply_direction(v);
  }
  return out;
}

GroundLabeling csf_classify(const PointCloud& leveled, const ClothParams& params) {
  if (leveled.empty()) throw Error(ErrorCode::EmptyInput, "csf_classify needs points");
  if (!(params.grid_resolution > 0 && params.time_step > 0 && params.gravity > 0 && params.class_threshold > 0 &&
        params.max_iterations > 0 && params.tolerance > 0)) {
    throw Error(ErrorCode::Parameter, "cloth parameters must be positive");
  }
  if (params.rigidness < 1 || params.rigidness > 3) throw Error(ErrorCode::Parameter, "rigidness must be 1, 2 or 3");

  const double res = params.grid_resolution;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& p : leveled.points) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const long nx = static_cast<long>(std::ceil((xmax - xmin) / res)) + 1;
  const long ny = static_cast<long>(std::ceil((ymax - ymin) / res)) + 1;
  const auto nodes = static_cast<std::size_t>(nx * ny);
  auto node = [&](long i, long j) { return static_cast<std::size_t>(j * nx + i); };

  // Inverted surface: the lowest original point of each node cell.
  std::vector<double> collision(nodes, -INFINITY);
  std::vector<std::uint8_t> filled(nodes, 0);
  for (const auto& p : leveled.points) {
    const long i = std::clamp(std::lround((p.x() - xmin) / res), 0L, nx - 1);
    const long j = std::clamp(std::lround((p.y() - ymin) / res), 0L, ny - 1);
    const auto k = node(i, j);
    collision[k] = std::max(collision[k], -p.z());
    filled[k] = 1;
  }
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < nodes; ++k) {
    if (filled[k]) queue.push_back(k);
  }
  while (!queue.empty()) {
    const auto k = queue.front();
    queue.pop_front();
    const long i = static_cast<long>(k) % nx, j = static_cast<long>(k) / nx;
    const long di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
    for (int d = 0; d < 4; ++d) {
      const long a = i + di[d], b = j + dj[d];
      if (a < 0 || b < 0 || a >= nx || b >= ny) continue;
      const auto kk = node(a, b);
      if (filled[kk]) continue;
      filled[kk] = 1;
      collision[kk] = collision[k];
      queue.push_back(kk);
    }
  }

  const double top = *std::max_element(collision.begin(), collision.end()) + res;
  std::vector<double> z(nodes, top), z_old(nodes, top), before(nodes);
  std::vector<std::uint8_t> movable(nodes, 1);
  const double fall = params.gravity * params.time_step * params.time_step;
  const double single = 1.0 - std::pow(0.7, params.rigidness);
  const double pair = 0.5 * (1.0 - std::pow(0.4, params.rigidness));
  auto spring = [&](std::size_t a, std::size_t b) {
    const double d = z[b] - z[a];
    if (movable[a] && movable[b]) {
      z[a] += pair * d;
      z[b] -= pair * d;
    } else if (movable[a]) {
      z[a] += single * d;
    } else if (movable[b]) {
      z[b] -= single * d;
    }
  };

  GroundLabeling out;
  bool converged = false;
  for (int it = 1; it <= params.max_iterations; ++it) {
    before = z;
    for (std::size_t k = 0; k < nodes; ++k) {
      if (!movable[k]) continue;
      const double next = z[k] + (z[k] - z_old[k]) * (1.0 - kDamping) - fall;
      z_old[k] = z[k];
      z[k] = next;
    }
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i + 1 < nx; ++i) spring(node(i, j), node(i + 1, j));
    }
    for (long j = 0; j + 1 < ny; ++j) {
      for (long i = 0; i < nx; ++i) spring(node(i, j), node(i, j + 1));
    }
    double residual = 0.0;
    bool any_movable = false;
    for (std::size_t k = 0; k < nodes; ++k) {
      if (movable[k] && z[k] <= collision[k]) {
        z[k] = collision[k];
        movable[k] = 0;
      }
      any_movable |= movable[k] != 0;
      residual = std::max(residual, std::abs(z[k] - before[k]));
    }
    out.iterations = it;
    out.residual = residual;
    if (!any_movable || residual < params.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::NoConvergence, "cloth still moving after " + std::to_string(params.max_iterations) +
                                              " iterations, residual " + std::to_string(out.residual));
  }

  out.labels.resize(leveled.size());
  for (std::size_t p = 0; p < leveled.size(); ++p) {
    const auto& q = leveled.points[p];
    const double fx = (q.x() - xmin) / res, fy = (q.y() - ymin) / res;
    const long i = nx > 1 ? std::clamp(static_cast<long>(std::floor(fx)), 0L, nx - 2) : 0;
    const long j = ny > 1 ? std::clamp(static_cast<long>(std::floor(fy)), 0L, ny - 2) : 0;
    const double tx = nx > 1 ? std::clamp(fx - static_cast<double>(i), 0.0, 1.0) : 0.0;
    const double ty = ny > 1 ? std::clamp(fy - static_cast<double>(j), 0.0, 1.0) : 0.0;
    const long i1 = std::min(i + 1, nx - 1), j1 = std::min(j + 1, ny - 1);
    const double h = (z[node(i, j)] * (1 - tx) + z[node(i1, j)] * tx) * (1 - ty) +
                     (z[node(i, j1)] * (1 - tx) + z[node(i1, j1)] * tx) * ty;
    out.labels[p] = std::abs(-q.z() - h) <= params.class_threshold ? Label::Ground : Label::Vegetation;
  }
  count_labels(out);
  return out;
}

std::vector<MaskEntry> parse_mask(std::string_view text) {
  std::vector<MaskEntry> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    MaskEntry e;
    if (line.front() == '+') {
      e.label = Label::Ground;
    } else if (line.front() == '-') {
      e.label = Label::Vegetation;
    } else {
      throw Error(ErrorCode::Parse, "mask line " + std::to_string(line_no) + ": expected +index or -index");
    }
    line.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), e.index);
    if (ec != std::errc{} || ptr != line.data() + line.size()) {
      throw Error(ErrorCode::Parse, "mask line " + std::to_string(line_no) + ": bad index");
    }
    out.push_back(e);
  }
  return out;
}

void apply_mask(GroundLabeling& labeling, const std::vector<MaskEntry>& mask) {
  for (const auto& e : mask) {
    if (e.index >= labeling.labels.size()) {
      throw Error(ErrorCode::Parameter, "mask index " + std::to_string(e.index) + " out of range");
    }
    labeling.labels[e.index] = e.label;
  }
  count_labels(labeling);
}

FilterResult filter_vegetation(const PointCloud& cloud, const FilterParams& params, const std::vector<MaskEntry>& mask) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "filter_vegetation needs points");
  const auto subs = partition_subslopes(cloud, params.cell_size, params.min_points, params.margin);
  const auto n = cloud.size();
  std::vector<double> best(n, INFINITY);
  std::vector<std::size_t> owner(n, subs.size());
  FilterResult result;
  result.labeling.labels.assign(n, Label::Unknown);
  for (std::size_t s = 0; s < subs.size(); ++s) {
    const auto leveled = level_subslope(subs[s], cloud);
    const auto lab = csf_classify(leveled.cloud, params.cloth);
    result.labeling.iterations = std::max(result.labeling.iterations, lab.iterations);
    result.labeling.residual = std::max(result.labeling.residual, lab.residual);
    for (std::size_t k = 0; k < subs[s].member_indices.size(); ++k) {
      const auto idx = subs[s].member_indices[k];
      const double d = std::abs(subs[s].plane.signed_distance(cloud.points[idx]));
      if (d < best[idx] || (d == best[idx] && s < owner[idx])) {
        best[idx] = d;
        owner[idx] = s;
        result.labeling.labels[idx] = lab.labels[k];
      }
    }
  }
  count_labels(result.labeling);
  if (!mask.empty()) apply_mask(result.labeling, mask);

  std::vector<std::size_t> ground, removed;
  for (std::size_t i = 0; i < n; ++i) (result.labeling.labels[i] == Label::Ground ? ground : removed).push_back(i);
  result.ground = select(cloud, ground);
  result.removed = select(cloud, removed);
  result.ground.labels = std::vector<Label>(ground.size(), Label::Ground);
  result.removed.labels = std::vector<Label>(removed.size(), Label::Vegetation);
  return result;
}

std::vector<double> ambient_visibility(const PointCloud& cloud, const VisibilityParams& params) {
  if (params.directions < 8) throw Error(ErrorCode::Parameter, "at least 8 visibility directions are required");
  if (!(params.voxel > 0 && params.max_distance > 0)) throw Error(ErrorCode::Parameter, "voxel and range must be positive");
  if (cloud.empty()) return {};
  const Point3 up = cloud.size() >= 3 ? fit_plane(cloud.points).plane.normal : Point3::UnitZ();
  const auto [e1, e2] = plane_basis(up);
  std::vector<Point3> dirs;
  const double golden = 3.14159265358979323846 * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < params.directions; ++i) {
    const double h = (i + 0.5) / params.directions;
    const double r = std::sqrt(1.0 - h * h), phi = golden * i;
    dirs.push_back(r * std::cos(phi) * e1 + r * std::sin(phi) * e2 + h * up);
  }
  auto key = [&](const Point3& p) {
    const auto q = (p / params.voxel).array().floor().cast<std::int64_t>();
    return (static_cast<std::uint64_t>(q.x() + (1 << 20)) << 42) | (static_cast<std::uint64_t>(q.y() + (1 << 20)) << 21) |
           static_cast<std::uint64_t>(q.z() + (1 << 20));
  };
  std::unordered_set<std::uint64_t> occupied;
  occupied.reserve(cloud.size());
  for (const auto& p : cloud.points) occupied.insert(key(p));

  std::vector<double> vis(cloud.size());
  const double step = params.voxel / 2;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 start = cloud.points[i] + up * (1.5 * params.voxel);
    int open = 0;
    for (const auto& d : dirs) {
      bool blocked = false;
      for (double t = 0; t <= params.max_distance; t += step) {
        if (occupied.count(key(start + t * d))) {
          blocked = true;
          break;
        }
      }
      open += !blocked;
    }
    vis[i] = static_cast<double>(open) / params.directions;
  }
  return vis;
}

GroundLabeling visibility_gradient_filter(const PointCloud& cloud, const VisibilityParams& params) {
  const auto vis = ambient_visibility(cloud, params);
  GroundLabeling out;
  out.labels.assign(cloud.size(), Label::Ground);
  if (cloud.empty()) return out;
  SpatialIndex index(cloud.points);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double g = 0.0;
    for (const auto& nb : index.nearest(cloud.points[i], params.neighbors + 1)) g = std::max(g, std::abs(vis[i] - vis[nb.index]));
    if (g > params.threshold) out.labels[i] = Label::Vegetation;
  }
  count_labels(out);
  return out;
}

}  // namespace tlsmon

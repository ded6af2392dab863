#include "tlsmon/synth.hpp"

#include "tlsmon/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tlsmon {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL) ^
                               splitmix64(static_cast<std::uint64_t>(iy) + 0x632BE59BD9B4E019ULL));
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double quintic(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = quintic(x - fx), ty = quintic(y - fy);
  const double a = lattice_value(seed, ix, iy), b = lattice_value(seed, ix + 1, iy);
  const double c = lattice_value(seed, ix, iy + 1), d = lattice_value(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

TerrainModel::TerrainModel(const TerrainParams& params) : params_(params) {
  if (!(params.extent.x() > 0 && params.extent.y() > 0)) throw Error(ErrorCode::Parameter, "extent must be positive");
  if (!(params.density > 0)) throw Error(ErrorCode::Parameter, "density must be positive");
  if (params.roughness < 0 || !(params.wavelength > 0) || params.octaves < 1) {
    throw Error(ErrorCode::Parameter, "invalid roughness, wavelength or octaves");
  }
  const double s = params.mean_slope_deg * kDeg;
  eu_ = Point3::UnitX();
  ev_ = Point3(0, std::cos(s), std::sin(s));
  ew_ = Point3(0, -std::sin(s), std::cos(s));
}

double TerrainModel::height(double u, double v) const {
  if (params_.roughness == 0) return 0.0;
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0 / params_.wavelength;
  for (int o = 0; o < params_.octaves; ++o) {
    sum += amp * value_noise(params_.seed + static_cast<std::uint64_t>(o), u * freq, v * freq);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return params_.roughness * sum / norm;
}

Eigen::Vector2d TerrainModel::gradient(double u, double v) const {
  const double h = 1e-4;
  return {(height(u + h, v) - height(u - h, v)) / (2 * h), (height(u, v + h) - height(u, v - h)) / (2 * h)};
}

Point3 TerrainModel::normal(double u, double v) const {
  const auto g = gradient(u, v);
  return (ew_ - g.x() * eu_ - g.y() * ev_).normalized();
}

Point3 TerrainModel::world(double u, double v, double w) const {
  return params_.origin + u * eu_ + v * ev_ + w * ew_;
}

Point3 TerrainModel::to_local(const Point3& p) const {
  const Point3 d = p - params_.origin;
  return {d.dot(eu_), d.dot(ev_), d.dot(ew_)};
}

Scene gen_terrain(const TerrainParams& params) { return gen_terrain(TerrainModel(params)); }

Scene gen_terrain(const TerrainModel& model) {
  const auto& p = model.params();
  const auto n = static_cast<std::size_t>(std::llround(p.extent.x() * p.extent.y() * p.density));
  std::mt19937_64 rng(splitmix64((p.sample_seed ? p.sample_seed : p.seed) ^ 0x7465727261696EULL));
  std::uniform_real_distribution<double> du(-p.extent.x() / 2, p.extent.x() / 2);
  std::uniform_real_distribution<double> dv(-p.extent.y() / 2, p.extent.y() / 2);
  Scene scene;
  scene.cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = du(rng), v = dv(rng);
    scene.cloud.points.push_back(model.surface(u, v));
  }
  scene.truth.ground_labels.assign(n, Label::Ground);
  scene.truth.true_displacement.assign(n, 0.0);
  scene.cloud.labels = scene.truth.ground_labels;
  return scene;
}

Scene add_vegetation(const Scene& scene, const TerrainModel& model, const VegetationParams& params) {
  if (!(params.coverage >= 0 && params.coverage < 1)) throw Error(ErrorCode::Parameter, "coverage must be in [0, 1)");
  if (!(params.height_range.x() > 0 && params.height_range.y() >= params.height_range.x())) {
    throw Error(ErrorCode::Parameter, "invalid vegetation height range");
  }
  Scene out = scene;
  const double base = static_cast<double>(scene.cloud.size());
  const auto n_veg = static_cast<std::size_t>(std::llround(params.coverage / (1.0 - params.coverage) * base));
  if (n_veg == 0) return out;
  if (!out.cloud.labels) out.cloud.labels = out.truth.ground_labels;

  std::mt19937_64 rng(splitmix64(params.seed ^ 0x76656765746174ULL));
  const auto& e = model.params().extent;
  const double r = params.cluster_radius;
  std::uniform_real_distribution<double> cu(-e.x() / 2 + r, e.x() / 2 - r), cv(-e.y() / 2 + r, e.y() / 2 - r);
  const std::size_t clusters = std::max<std::size_t>(1, n_veg / std::max<std::size_t>(1, params.points_per_cluster));
  std::vector<Eigen::Vector2d> centers(clusters);
  for (auto& c : centers) c = {cu(rng), cv(rng)};
  std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> dh(params.height_range.x(), params.height_range.y());
  for (std::size_t i = 0; i < n_veg; ++i) {
    const auto& c = centers[pick(rng)];
    const double rho = r * std::sqrt(unit(rng)), phi = 2 * kPi * unit(rng);
    const double u = c.x() + rho * std::cos(phi), v = c.y() + rho * std::sin(phi);
    const double h = dh(rng);
    out.cloud.points.push_back(model.world(u, v, model.height(u, v) + h));
    out.truth.ground_labels.push_back(Label::Vegetation);
    out.truth.true_displacement.push_back(0.0);
    out.cloud.labels->push_back(Label::Vegetation);
  }
  for (auto& [name, values] : out.cloud.scalars) values.resize(out.cloud.size(), 0.0);
  out.cloud.normals.reset();
  out.cloud.normal_valid.reset();
  return out;
}

Eigen::Vector2d region_axis(const TerrainModel& model, const RegionSpec& spec) {
  const Point3 a(std::sin(spec.azimuth_deg * kDeg), std::cos(spec.azimuth_deg * kDeg), 0.0);
  Eigen::Vector2d uv(a.dot(model.eu()), a.dot(model.ev()));
  if (uv.norm() < 1e-9) return {0.0, -1.0};
  return uv.normalized();
}

double region_weight(const TerrainModel& model, const RegionSpec& spec, double u, double v) {
  const Eigen::Vector2d along = region_axis(model, spec);
  const Eigen::Vector2d across(-along.y(), along.x());
  const Eigen::Vector2d d = Eigen::Vector2d(u, v) - spec.center;
  const double a = d.dot(along), c = d.dot(across);
  double sd;
  if (spec.shape == RegionShape::Rectangle) {
    const double qx = std::abs(a) - spec.radius_along, qy = std::abs(c) - spec.radius_across;
    sd = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0)) + std::min(std::max(qx, qy), 0.0);
  } else {
    const double rho = std::hypot(a / spec.radius_along, c / spec.radius_across);
    sd = (rho - 1.0) * std::min(spec.radius_along, spec.radius_across);
  }
  const double t = spec.taper_m;
  if (t <= 0) return sd <= 0 ? 1.0 : 0.0;
  if (sd <= -t / 2) return 1.0;
  if (sd >= t / 2) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (sd + t / 2) / t));
}

Point3 region_displacement(const TerrainModel& model, const RegionSpec& spec, double u, double v) {
  const double w = region_weight(model, spec, u, v);
  if (w == 0) return Point3::Zero();
  const Eigen::Vector2d along = region_axis(model, spec);
  Point3 dir = model.normal(u, v);
  if (spec.slide_fraction != 0) {
    Point3 t = along.x() * model.eu() + along.y() * model.ev();
    t -= dir * t.dot(dir);
    dir = (dir + spec.slide_fraction * t.normalized()).normalized();
  }
  return spec.depth_m * w * dir;
}

Scene apply_landslide(const Scene& scene, const TerrainModel& model, const RegionSpec& spec) {
  if (spec.depth_m == 0) throw Error(ErrorCode::Parameter, "landslide depth must be non-zero");
  if (!(spec.radius_along > 0 && spec.radius_across > 0)) throw Error(ErrorCode::Parameter, "radii must be positive");
  Scene out = scene;
  if (out.truth.true_displacement.size() != out.cloud.size()) out.truth.true_displacement.assign(out.cloud.size(), 0.0);
  for (std::size_t i = 0; i < out.cloud.size(); ++i) {
    const Point3 l = model.to_local(out.cloud.points[i]);
    const double w = region_weight(model, spec, l.x(), l.y());
    if (w == 0) continue;
    out.cloud.points[i] += region_displacement(model, spec, l.x(), l.y());
    out.truth.true_displacement[i] += spec.depth_m * w;
  }
  out.truth.region_specs.push_back(spec);
  out.cloud.normals.reset();
  out.cloud.normal_valid.reset();
  return out;
}

double landslide_volume(const TerrainModel& model, const RegionSpec& spec, double step) {
  if (!(step > 0)) throw Error(ErrorCode::Parameter, "quadrature step must be positive");
  const double reach = std::hypot(spec.radius_along, spec.radius_across) + spec.taper_m;
  const auto n = static_cast<long>(std::ceil(2 * reach / step));
  double sum = 0.0;
  for (long i = 0; i < n; ++i) {
    const double u = spec.center.x() - reach + (i + 0.5) * step;
    for (long j = 0; j < n; ++j) {
      const double v = spec.center.y() - reach + (j + 0.5) * step;
      sum += region_weight(model, spec, u, v);
    }
  }
  return std::abs(spec.depth_m) * sum * step * step;
}

std::vector<PointCloud> simulate_stations(const PointCloud& cloud, const std::vector<RigidTransform>& poses,
                                          const StationParams& params) {
  if (poses.empty()) throw Error(ErrorCode::Parameter, "at least one station pose is required");
  if (params.noise_sigma < 0) throw Error(ErrorCode::Parameter, "noise sigma must be non-negative");
  std::vector<PointCloud> out;
  for (std::size_t s = 0; s < poses.size(); ++s) {
    const RigidTransform to_station = poses[s].inverse();
    std::vector<Point3> local(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) local[i] = to_station.apply(cloud.points[i]);

    std::vector<std::uint8_t> keep(cloud.size(), 1);
    if (params.max_range > 0) {
      for (std::size_t i = 0; i < local.size(); ++i) keep[i] = local[i].norm() <= params.max_range;
    }
    if (params.occlusion && !local.empty()) {
      const double bin = params.bin_deg * kDeg;
      std::vector<double> az(local.size()), el(local.size()), range(local.size());
      double az_lo = INFINITY, az_hi = -INFINITY, el_lo = INFINITY, el_hi = -INFINITY;
      for (std::size_t i = 0; i < local.size(); ++i) {
        const auto& p = local[i];
        range[i] = p.norm();
        az[i] = std::atan2(p.y(), p.x());
        el[i] = std::atan2(p.z(), std::hypot(p.x(), p.y()));
        if (!keep[i]) continue;
        az_lo = std::min(az_lo, az[i]);
        az_hi = std::max(az_hi, az[i]);
        el_lo = std::min(el_lo, el[i]);
        el_hi = std::max(el_hi, el[i]);
      }
      if (az_lo <= az_hi) {
        const long na = static_cast<long>((az_hi - az_lo) / bin) + 1;
        const long ne = static_cast<long>((el_hi - el_lo) / bin) + 1;
        std::vector<float> zbuf(static_cast<std::size_t>(na * ne), std::numeric_limits<float>::infinity());
        auto cell = [&](std::size_t i) {
          return std::pair<long, long>{static_cast<long>((az[i] - az_lo) / bin), static_cast<long>((el[i] - el_lo) / bin)};
        };
        for (std::size_t i = 0; i < local.size(); ++i) {
          if (!keep[i] || range[i] <= 0) continue;
          const auto [ca, ce] = cell(i);
          const long reach = static_cast<long>(std::ceil(params.splat_radius / range[i] / bin));
          for (long a = std::max(0L, ca - reach); a <= std::min(na - 1, ca + reach); ++a) {
            for (long e = std::max(0L, ce - reach); e <= std::min(ne - 1, ce + reach); ++e) {
              auto& z = zbuf[static_cast<std::size_t>(a * ne + e)];
              z = std::min(z, static_cast<float>(range[i]));
            }
          }
        }
        for (std::size_t i = 0; i < local.size(); ++i) {
          if (!keep[i]) continue;
          const auto [ca, ce] = cell(i);
          keep[i] = range[i] <= zbuf[static_cast<std::size_t>(ca * ne + ce)] + params.depth_tolerance;
        }
      }
    }

    std::mt19937_64 rng(splitmix64(params.seed + 0x5354415449ULL * (s + 1)));
    std::normal_distribution<double> noise(0.0, params.noise_sigma);
    PointCloud pc;
    pc.epoch_id = cloud.epoch_id;
    auto& src = pc.scalars["source_index"];
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (!keep[i]) continue;
      Point3 p = local[i];
      if (params.noise_sigma > 0) p += Point3(noise(rng), noise(rng), noise(rng));
      pc.points.push_back(p);
      src.push_back(static_cast<double>(i));
    }
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace tlsmon

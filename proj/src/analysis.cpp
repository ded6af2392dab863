#include "tlsmon/analysis.hpp"

#include "tlsmon/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace tlsmon {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  throw Error(ErrorCode::Parse, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 4> kShapeNames{"VL", "L", "W", "VW"};
constexpr std::array<std::string_view, 7> kCrudenNames{"FA", "TO", "S", "SP", "FL", "RS", "TS"};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += pad(cells[c], width[c]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

}  // namespace

std::string_view to_string(ShapeClass c) { return kShapeNames.at(static_cast<std::size_t>(c)); }
ShapeClass parse_shape_class(std::string_view s) { return parse_enum<ShapeClass>(s, kShapeNames, "shape class"); }
std::string_view to_string(CrudenType t) { return kCrudenNames.at(static_cast<std::size_t>(t)); }
CrudenType parse_cruden_type(std::string_view s) { return parse_enum<CrudenType>(s, kCrudenNames, "Cruden type"); }

ShapeMeasure region_extent(const Region& region, const DeformationField& field, const TriangleMesh& mesh,
                           const ExtentParams& params) {
  if (region.vertex_set.empty()) throw Error(ErrorCode::EmptyInput, "region has no vertices");
  const Point3 n = mesh.projection_plane.normal;
  const auto [e1, e2] = plane_basis(n);
  auto in_plane = [&](const Point3& v) { return Eigen::Vector2d(v.dot(e1), v.dot(e2)); };

  ShapeMeasure m;
  m.region_id = region.id;
  Eigen::Vector2d dir = Eigen::Vector2d::Zero();
  if (params.motion_azimuth_deg) {
    const double a = *params.motion_azimuth_deg * kDeg;
    dir = in_plane(Point3(std::sin(a), std::cos(a), 0.0));
    if (dir.norm() < 1e-9) throw Error(ErrorCode::UndefinedMotionVector, "azimuth is normal to the DTM plane");
  } else {
    const bool have_offsets = field.offsets.size() == field.values.size();
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    double weight = 0.0, length = 0.0;
    for (auto v : region.vertex_set) {
      if (v >= field.values.size()) throw Error(ErrorCode::Parameter, "region vertex outside the field");
      if (!have_offsets || !field.valid[v]) continue;
      const double w = std::abs(field.values[v]);
      sum += w * in_plane(field.offsets[v]);
      length += w * field.offsets[v].norm();
      weight += w;
    }
    if (weight > 0 && sum.norm() / weight >= params.min_motion_ratio * length / weight && sum.norm() > 0) {
      dir = sum;
    } else {
      dir = in_plane(-Point3::UnitZ());
      m.motion_from_slope = true;
      if (dir.norm() < 1e-9) {
        throw Error(ErrorCode::UndefinedMotionVector, "no lateral motion and the DTM plane is horizontal");
      }
    }
  }
  m.motion_vector = dir.normalized();
  const Eigen::Vector2d across(-m.motion_vector.y(), m.motion_vector.x());
  double lo_l = std::numeric_limits<double>::infinity(), hi_l = -lo_l, lo_w = lo_l, hi_w = -lo_l;
  for (auto v : region.vertex_set) {
    if (v >= mesh.vertices.size()) throw Error(ErrorCode::Parameter, "region vertex outside the mesh");
    const Eigen::Vector2d q = in_plane(mesh.vertices[v]);
    const double a = q.dot(m.motion_vector), c = q.dot(across);
    lo_l = std::min(lo_l, a);
    hi_l = std::max(hi_l, a);
    lo_w = std::min(lo_w, c);
    hi_w = std::max(hi_w, c);
  }
  m.L_m = hi_l - lo_l;
  m.W_m = hi_w - lo_w;
  if (!(m.L_m > 0) || !(m.W_m > 0)) throw Error(ErrorCode::DegenerateSurface, "region has zero extent");
  m.theta_deg = shape_angle(m.W_m, m.L_m);
  return m;
}

double shape_angle(double W_m, double L_m) {
  if (!(W_m > 0) || !(L_m > 0) || !std::isfinite(W_m) || !std::isfinite(L_m)) {
    throw Error(ErrorCode::Parameter, "W and L must be positive");
  }
  return std::atan2(L_m, W_m) / kDeg;
}

ShapeClass classify_shape(double theta_deg) {
  if (!(theta_deg > 0) || !(theta_deg < 90)) throw Error(ErrorCode::Parameter, "shape angle must lie in (0, 90)");
  if (theta_deg >= 67.5) return ShapeClass::VL;
  if (theta_deg >= 45.0) return ShapeClass::L;
  if (theta_deg >= 22.5) return ShapeClass::W;
  return ShapeClass::VW;
}

double ErrorBudget::sigma_mm() const {
  const auto c = components();
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(c[i] >= 0) || multiplicities[i] < 0) throw Error(ErrorCode::Parameter, "error components must be non-negative");
    sum += multiplicities[i] * c[i] * c[i];
  }
  return std::sqrt(sum);
}

double error_budget(double m_tls, double m_mreg, double m_treg, double m_veg, double m_mesh) {
  return ErrorBudget{m_tls, m_mreg, m_treg, m_veg, m_mesh}.sigma_mm();
}

double relative_error(double sigma_mm, double displacement_m) {
  if (!(displacement_m > 0)) throw Error(ErrorCode::Parameter, "displacement must be positive");
  if (!(sigma_mm >= 0)) throw Error(ErrorCode::Parameter, "sigma must be non-negative");
  return sigma_mm / 1000.0 / displacement_m;
}

std::chrono::year_month_day parse_date(std::string_view text) {
  const std::string str(text);
  auto bad = [&] { return Error(ErrorCode::Parse, "expected YYYY-MM-DD date, got '" + str + "'"); };
  if (str.size() != 10 || str[4] != str[7] || (str[4] != '-' && str[4] != '.')) throw bad();
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(str[i]))) throw bad();
  }
  const int y = std::stoi(str.substr(0, 4));
  const auto mo = static_cast<unsigned>(std::stoi(str.substr(5, 2)));
  const auto d = static_cast<unsigned>(std::stoi(str.substr(8, 2)));
  const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!date.ok()) throw Error(ErrorCode::Parse, "invalid calendar date '" + str + "'");
  return date;
}

std::string format_date(const std::chrono::year_month_day& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()), static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()));
  return buf;
}

int interval_days(const std::chrono::year_month_day& a, const std::chrono::year_month_day& b) {
  if (!a.ok() || !b.ok()) throw Error(ErrorCode::Parameter, "invalid date");
  const auto days = (std::chrono::sys_days{b} - std::chrono::sys_days{a}).count();
  if (days <= 0) throw Error(ErrorCode::Parameter, "second date must be after the first");
  return static_cast<int>(days);
}

std::string RegionRow::type() const {
  std::string t(to_string(shape_class));
  if (annotation) t += "-" + std::string(to_string(*annotation));
  return t;
}

DeformationRow summarize_field(const DeformationField& field) {
  DeformationRow row;
  row.compared_epoch = field.compared_epoch;
  row.reference_epoch = field.reference_epoch;
  row.interval_days = field.interval_days;
  const auto s = field_stats(field);
  row.mean_m = s.mean;
  row.std_m = s.std;
  row.valid_count = s.valid_count;
  const auto u = field_stats_unmasked(field);
  row.unmasked_mean_m = u.mean;
  row.unmasked_std_m = u.std;
  row.unmasked_count = u.valid_count;
  return row;
}

Report build_report(const std::vector<EpochRecord>& epochs, const std::vector<DeformationField>& fields,
                    const std::vector<Region>& regions, const std::vector<ShapeMeasure>& shapes,
                    const std::vector<MotionAnnotation>& annotations, const ErrorBudget& budget,
                    const nlohmann::json& parameters) {
  if (regions.size() != shapes.size()) throw Error(ErrorCode::IdMismatch, "region and shape counts differ");
  std::map<int, std::optional<CrudenType>> notes;
  for (const auto& a : annotations) notes[a.region_id] = a.cruden_type;
  std::set<int> ids;
  Report r;
  r.epochs = epochs;
  for (const auto& f : fields) r.deformation.push_back(summarize_field(f));
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& reg = regions[i];
    const auto& sh = shapes[i];
    if (reg.id != sh.region_id) {
      throw Error(ErrorCode::IdMismatch,
                  "region " + std::to_string(reg.id) + " paired with shape " + std::to_string(sh.region_id));
    }
    if (!ids.insert(reg.id).second) throw Error(ErrorCode::IdMismatch, "duplicate region id " + std::to_string(reg.id));
    RegionRow row;
    row.id = reg.id;
    row.period = reg.period;
    row.W_m = sh.W_m;
    row.L_m = sh.L_m;
    row.theta_deg = sh.theta_deg;
    row.shape_class = classify_shape(sh.theta_deg);
    if (auto it = notes.find(reg.id); it != notes.end()) row.annotation = it->second;
    row.volume_m3 = reg.volume_m3;
    row.area_m2 = reg.area_m2;
    row.mean_rate_mm_day = reg.mean_rate_mm_day;
    r.regions.push_back(row);
  }
  for (const auto& [id, type] : notes) {
    if (!ids.count(id)) throw Error(ErrorCode::IdMismatch, "annotation for unknown region " + std::to_string(id));
  }
  r.budget = budget;
  r.sigma_mm = budget.sigma_mm();
  r.parameters = parameters;
  return r;
}

nlohmann::json report_to_json(const Report& report) {
  using nlohmann::json;
  json doc;
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch_id", e.epoch_id}, {"date", format_date(e.acquisition_date)}, {"station_count", e.station_count}});
  }
  doc["epochs"] = epochs;
  json rows = json::array();
  for (const auto& d : report.deformation) {
    rows.push_back({{"compared_epoch", d.compared_epoch},
                    {"reference_epoch", d.reference_epoch},
                    {"interval_days", d.interval_days},
                    {"mean_m", d.mean_m},
                    {"std_m", d.std_m},
                    {"valid_count", d.valid_count},
                    {"unmasked_mean_m", d.unmasked_mean_m},
                    {"unmasked_std_m", d.unmasked_std_m},
                    {"unmasked_count", d.unmasked_count}});
  }
  doc["deformation"] = rows;
  json regions = json::array();
  for (const auto& g : report.regions) {
    regions.push_back({{"id", g.id},
                       {"period", g.period},
                       {"W_m", g.W_m},
                       {"L_m", g.L_m},
                       {"theta_deg", g.theta_deg},
                       {"class", to_string(g.shape_class)},
                       {"annotation", g.annotation ? json(to_string(*g.annotation)) : json(nullptr)},
                       {"type", g.type()},
                       {"volume_m3", g.volume_m3},
                       {"area_m2", g.area_m2},
                       {"mean_rate_mm_day", g.mean_rate_mm_day}});
  }
  doc["regions"] = regions;
  const auto& b = report.budget;
  doc["error_budget"] = {{"m_tls_mm", b.m_tls},   {"m_mreg_mm", b.m_mreg}, {"m_treg_mm", b.m_treg},
                         {"m_veg_mm", b.m_veg},   {"m_mesh_mm", b.m_mesh}, {"multiplicities", b.multiplicities},
                         {"sigma_mm", report.sigma_mm}};
  doc["parameters"] = report.parameters;
  return doc;
}

Report report_from_json(const nlohmann::json& doc) {
  Report r;
  try {
    for (const auto& e : doc.at("epochs")) {
      r.epochs.push_back({e.at("epoch_id").get<std::string>(), parse_date(e.at("date").get<std::string>()),
                          e.at("station_count").get<int>()});
    }
    for (const auto& d : doc.at("deformation")) {
      DeformationRow row;
      row.compared_epoch = d.at("compared_epoch").get<std::string>();
      row.reference_epoch = d.at("reference_epoch").get<std::string>();
      row.interval_days = d.at("interval_days").get<double>();
      row.mean_m = d.at("mean_m").get<double>();
      row.std_m = d.at("std_m").get<double>();
      row.valid_count = d.at("valid_count").get<std::size_t>();
      row.unmasked_mean_m = d.at("unmasked_mean_m").get<double>();
      row.unmasked_std_m = d.at("unmasked_std_m").get<double>();
      row.unmasked_count = d.at("unmasked_count").get<std::size_t>();
      r.deformation.push_back(row);
    }
    for (const auto& g : doc.at("regions")) {
      RegionRow row;
      row.id = g.at("id").get<int>();
      row.period = g.at("period").get<std::string>();
      row.W_m = g.at("W_m").get<double>();
      row.L_m = g.at("L_m").get<double>();
      row.theta_deg = g.at("theta_deg").get<double>();
      row.shape_class = parse_shape_class(g.at("class").get<std::string>());
      if (!g.at("annotation").is_null()) row.annotation = parse_cruden_type(g.at("annotation").get<std::string>());
      row.volume_m3 = g.at("volume_m3").get<double>();
      row.area_m2 = g.at("area_m2").get<double>();
      row.mean_rate_mm_day = g.at("mean_rate_mm_day").get<double>();
      r.regions.push_back(row);
    }
    const auto& b = doc.at("error_budget");
    r.budget.m_tls = b.at("m_tls_mm").get<double>();
    r.budget.m_mreg = b.at("m_mreg_mm").get<double>();
    r.budget.m_treg = b.at("m_treg_mm").get<double>();
    r.budget.m_veg = b.at("m_veg_mm").get<double>();
    r.budget.m_mesh = b.at("m_mesh_mm").get<double>();
    r.budget.multiplicities = b.at("multiplicities").get<std::array<int, 5>>();
    r.sigma_mm = b.at("sigma_mm").get<double>();
    r.parameters = doc.at("parameters");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string write_report(const Report& report) { return report_to_json(report).dump(2) + "\n"; }

std::string render_report_text(const Report& report) {
  std::ostringstream os;
  os << "Epochs\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : report.epochs) rows.push_back({e.epoch_id, format_date(e.acquisition_date), std::to_string(e.station_count)});
  os << table({"epoch", "date", "stations"}, rows) << '\n';

  os << "Deformation\n";
  rows.clear();
  for (const auto& d : report.deformation) {
    rows.push_back({d.reference_epoch + "," + d.compared_epoch, fixed(d.interval_days, 0), fixed(d.mean_m * 100, 1),
                    fixed(d.std_m * 100, 1), fixed(d.unmasked_mean_m * 100, 1), fixed(d.unmasked_std_m * 100, 1)});
  }
  os << table({"period", "interval days", "mean (cm)", "std (cm)", "unmasked mean (cm)", "unmasked std (cm)"}, rows)
     << '\n';

  os << "Regions\n";
  rows.clear();
  for (const auto& g : report.regions) {
    rows.push_back({std::to_string(g.id), g.period, fixed(g.W_m, 1), fixed(g.L_m, 1), fixed(g.theta_deg, 2), fixed(g.volume_m3, 1),
                    fixed(g.area_m2, 1), fixed(g.mean_rate_mm_day, 2), g.type()});
  }
  os << table({"id", "period", "W (m)", "L (m)", "theta (deg)", "volume (m3)", "area (m2)", "rate (mm/day)", "type"}, rows)
     << '\n';
  os << "sigma " << fixed(report.sigma_mm, 1) << " mm\n";
  return os.str();
}

}  // namespace tlsmon

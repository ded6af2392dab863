#pragma once

#include "tlsmon/cloud.hpp"
#include "tlsmon/deformation.hpp"
#include "tlsmon/terrain.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tlsmon {

enum class ShapeClass { VL, L, W, VW };
std::string_view to_string(ShapeClass c);
ShapeClass parse_shape_class(std::string_view s);

// Cruden movement types; supplied by the analyst, never inferred.
enum class CrudenType { FA, TO, S, SP, FL, RS, TS };
std::string_view to_string(CrudenType t);
CrudenType parse_cruden_type(std::string_view s);

struct ShapeMeasure {
  int region_id = 0;
  double W_m = 0.0;
  double L_m = 0.0;
  double theta_deg = 0.0;
  Eigen::Vector2d motion_vector = Eigen::Vector2d::UnitX();  // unit, in plane_basis coordinates
  bool motion_from_slope = false;  // fell back to the plane's steepest descent
};

struct ExtentParams {
  // Compass azimuth (degrees clockwise from +y) overriding the field-derived direction.
  std::optional<double> motion_azimuth_deg;
  // Weighted in-plane motion shorter than this fraction of the mean offset
  // length counts as no lateral motion.
  double min_motion_ratio = 0.1;
};

// L: extent of the region's projected vertices along the motion vector;
// W: extent across it.
ShapeMeasure region_extent(const Region& region, const DeformationField& field, const TriangleMesh& mesh,
                           const ExtentParams& params = {});

// arctan(L / W) in degrees.
double shape_angle(double W_m, double L_m);
// Lower bounds inclusive: VL [67.5, 90), L [45, 67.5), W [22.5, 45), VW (0, 22.5).
ShapeClass classify_shape(double theta_deg);

struct ErrorBudget {
  double m_tls = 6.0;
  double m_mreg = 30.0;
  double m_treg = 60.0;
  double m_veg = 10.0;
  double m_mesh = 10.0;
  std::array<int, 5> multiplicities{2, 2, 1, 2, 1};

  std::array<double, 5> components() const { return {m_tls, m_mreg, m_treg, m_veg, m_mesh}; }
  // Propagated error in mm; throws Parameter on a negative component.
  double sigma_mm() const;
  bool operator==(const ErrorBudget&) const = default;
};

double error_budget(double m_tls, double m_mreg, double m_treg, double m_veg, double m_mesh);

// sigma / displacement as a fraction.
double relative_error(double sigma_mm, double displacement_m);

// YYYY-MM-DD or YYYY.MM.DD.
std::chrono::year_month_day parse_date(std::string_view text);
std::string format_date(const std::chrono::year_month_day& date);
// Calendar days from a to b; b must be later.
int interval_days(const std::chrono::year_month_day& a, const std::chrono::year_month_day& b);

struct MotionAnnotation {
  int region_id = 0;
  std::optional<CrudenType> cruden_type;
};

struct DeformationRow {
  std::string compared_epoch;
  std::string reference_epoch;
  double interval_days = 0.0;
  double mean_m = 0.0;
  double std_m = 0.0;
  std::size_t valid_count = 0;
  double unmasked_mean_m = 0.0;
  double unmasked_std_m = 0.0;
  std::size_t unmasked_count = 0;
  bool operator==(const DeformationRow&) const = default;
};

struct RegionRow {
  int id = 0;
  std::string period;
  double W_m = 0.0;
  double L_m = 0.0;
  double theta_deg = 0.0;
  ShapeClass shape_class = ShapeClass::L;
  std::optional<CrudenType> annotation;
  double volume_m3 = 0.0;
  double area_m2 = 0.0;
  double mean_rate_mm_day = 0.0;

  // "L" or "L-RS".
  std::string type() const;
  bool operator==(const RegionRow&) const = default;
};

struct Report {
  std::vector<EpochRecord> epochs;
  std::vector<DeformationRow> deformation;
  std::vector<RegionRow> regions;
  ErrorBudget budget;
  double sigma_mm = 0.0;
  nlohmann::json parameters = nlohmann::json::object();
  bool operator==(const Report&) const = default;
};

DeformationRow summarize_field(const DeformationField& field);

// Regions and shapes must carry the same ids in the same order; annotations
// may only name existing regions. Otherwise IdMismatch.
Report build_report(const std::vector<EpochRecord>& epochs, const std::vector<DeformationField>& fields,
                    const std::vector<Region>& regions, const std::vector<ShapeMeasure>& shapes,
                    const std::vector<MotionAnnotation>& annotations, const ErrorBudget& budget,
                    const nlohmann::json& parameters = nlohmann::json::object());

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& doc);
// Two-space indented JSON with a trailing newline.
std::string write_report(const Report& report);
// Aligned-column tables.
std::string render_report_text(const Report& report);

}  // namespace tlsmon

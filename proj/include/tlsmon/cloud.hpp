#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tlsmon {

using Point3 = Eigen::Vector3d;

enum class Label : std::uint8_t { Unknown = 0, Ground = 1, Vegetation = 2 };

// Epoch-tagged point set. Coordinates are stored relative to origin_shift so
// millimetre differences survive on site-scale coordinates.
struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<Point3>> normals;
  // Per-point flag for normals; false where the neighbourhood was degenerate.
  std::optional<std::vector<std::uint8_t>> normal_valid;
  std::map<std::string, std::vector<double>> scalars;
  std::optional<std::vector<Label>> labels;
  std::string epoch_id;
  Point3 origin_shift = Point3::Zero();

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws Error(Parameter) when a per-point channel is misaligned or a normal
  // is not unit length.
  void validate() const;
};

// Copy of the selected points with every per-point channel carried along.
PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices);

// Concatenate b onto a. Channels present in only one side are dropped.
PointCloud concatenate(const PointCloud& a, const PointCloud& b);

// Re-express the cloud relative to a new origin_shift.
void rebase(PointCloud& cloud, const Point3& origin_shift);

// Axis-aligned bounding box diagonal.
double diameter(const std::vector<Point3>& points);

Point3 centroid(const std::vector<Point3>& points);

struct EpochRecord {
  std::string epoch_id;
  std::chrono::year_month_day acquisition_date;
  int station_count = 1;
  bool operator==(const EpochRecord&) const = default;
};

// Dates must strictly increase and station counts be positive.
void validate_epochs(const std::vector<EpochRecord>& epochs);

}  // namespace tlsmon

#include "tlsmon/cloud.hpp"

#include "tlsmon/error.hpp"

#include <cmath>

namespace tlsmon {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Format: return "FormatError";
    case ErrorCode::Parameter: return "ParameterError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateCorrespondences: return "DegenerateCorrespondences";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::InsufficientGeometry: return "InsufficientGeometry";
    case ErrorCode::DisconnectedViews: return "DisconnectedViews";
    case ErrorCode::TooSparse: return "TooSparse";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateSurface: return "DegenerateSurface";
    case ErrorCode::UndefinedMotionVector: return "UndefinedMotionVector";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Stage: return "StageError";
  }
  return "Unknown";
}

void PointCloud::validate() const {
  const auto n = points.size();
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::Parameter, "non-finite coordinate");
  }
  if (normals) {
    if (normals->size() != n) throw Error(ErrorCode::Parameter, "normal count mismatch");
    for (const auto& v : *normals) {
      if (std::abs(v.norm() - 1.0) > 1e-6) throw Error(ErrorCode::Parameter, "normal not unit length");
    }
  }
  if (normal_valid && normal_valid->size() != n) {
    throw Error(ErrorCode::Parameter, "normal validity count mismatch");
  }
  for (const auto& [name, values] : scalars) {
    if (values.size() != n) throw Error(ErrorCode::Parameter, "scalar channel '" + name + "' misaligned");
  }
  if (labels && labels->size() != n) throw Error(ErrorCode::Parameter, "label count mismatch");
}

PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.epoch_id = cloud.epoch_id;
  out.origin_shift = cloud.origin_shift;
  out.points.reserve(indices.size());
  for (auto i : indices) out.points.push_back(cloud.points[i]);
  if (cloud.normals) {
    out.normals.emplace();
    out.normals->reserve(indices.size());
    for (auto i : indices) out.normals->push_back((*cloud.normals)[i]);
  }
  if (cloud.normal_valid) {
    out.normal_valid.emplace();
    for (auto i : indices) out.normal_valid->push_back((*cloud.normal_valid)[i]);
  }
  for (const auto& [name, values] : cloud.scalars) {
    auto& dst = out.scalars[name];
    dst.reserve(indices.size());
    for (auto i : indices) dst.push_back(values[i]);
  }
  if (cloud.labels) {
    out.labels.emplace();
    for (auto i : indices) out.labels->push_back((*cloud.labels)[i]);
  }
  return out;
}

PointCloud concatenate(const PointCloud& a, const PointCloud& b) {
  PointCloud out;
  out.epoch_id = a.epoch_id;
  out.origin_shift = a.origin_shift;
  const Point3 rebase = b.origin_shift - a.origin_shift;
  out.points = a.points;
  for (const auto& p : b.points) out.points.push_back(p + rebase);
  if (a.normals && b.normals) {
    out.normals = *a.normals;
    out.normals->insert(out.normals->end(), b.normals->begin(), b.normals->end());
    if (a.normal_valid && b.normal_valid) {
      out.normal_valid = *a.normal_valid;
      out.normal_valid->insert(out.normal_valid->end(), b.normal_valid->begin(), b.normal_valid->end());
    }
  }
  for (const auto& [name, values] : a.scalars) {
    auto it = b.scalars.find(name);
    if (it == b.scalars.end()) continue;
    auto& dst = out.scalars[name];
    dst = values;
    dst.insert(dst.end(), it->second.begin(), it->second.end());
  }
  if (a.labels && b.labels) {
    out.labels = *a.labels;
    out.labels->insert(out.labels->end(), b.labels->begin(), b.labels->end());
  }
  return out;
}

void rebase(PointCloud& cloud, const Point3& origin_shift) {
  const Point3 delta = cloud.origin_shift - origin_shift;
  for (auto& p : cloud.points) p += delta;
  cloud.origin_shift = origin_shift;
}

double diameter(const std::vector<Point3>& points) {
  if (points.empty()) return 0.0;
  Point3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

Point3 centroid(const std::vector<Point3>& points) {
  Point3 sum = Point3::Zero();
  for (const auto& p : points) sum += p;
  return points.empty() ? sum : Point3(sum / static_cast<double>(points.size()));
}

void validate_epochs(const std::vector<EpochRecord>& epochs) {
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (!epochs[i].acquisition_date.ok()) {
      throw Error(ErrorCode::Parameter, "invalid date for epoch " + epochs[i].epoch_id);
    }
    if (epochs[i].station_count < 1) {
      throw Error(ErrorCode::Parameter, "station count must be positive for epoch " + epochs[i].epoch_id);
    }
    if (i > 0 && std::chrono::sys_days{epochs[i].acquisition_date} <=
                     std::chrono::sys_days{epochs[i - 1].acquisition_date}) {
      throw Error(ErrorCode::Parameter, "epoch dates must strictly increase at " + epochs[i].epoch_id);
    }
  }
}

}  // namespace tlsmon

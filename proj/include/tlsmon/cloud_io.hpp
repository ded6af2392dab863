#pragma once

#include "tlsmon/cloud.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tlsmon {

enum class CloudFormat { XyzAscii, Ply };

enum class PlyEncoding { Ascii, BinaryLittleEndian };

// Decode a point cloud. The centroid rounded to whole metres becomes
// origin_shift and is subtracted from every point; record order is kept.
//
// XYZ: "x y z [extras...]" per line, '#' lines and blank lines skipped. A
// 4th column becomes scalar "intensity"; further columns "extra_<n>". A
// leading "# x y z name..." comment names the extra columns instead.
// PLY: ascii or binary_little_endian; x/y/z must be float or double; other
// numeric vertex properties become scalar channels except nx/ny/nz
// (normals) and label (class labels).
PointCloud parse_cloud(std::string_view bytes, CloudFormat format);

// Encode with origin_shift added back. PLY output uses 64-bit properties.
std::string write_cloud(const PointCloud& cloud, CloudFormat format, bool include_scalars,
                        PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

// Raw PLY contents: vertex properties by name, faces, and header comments.
// No origin shift is applied.
struct PlyData {
  std::vector<std::string> vertex_property_names;
  std::vector<std::vector<double>> vertex_columns;  // one column per property
  std::vector<std::array<int, 3>> faces;
  std::vector<std::string> comments;

  std::size_t vertex_count() const { return vertex_columns.empty() ? 0 : vertex_columns.front().size(); }
  const std::vector<double>* column(std::string_view name) const;
};

PlyData parse_ply(std::string_view bytes);

std::string write_ply(const PlyData& data, PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

CloudFormat format_from_path(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud, bool include_scalars = true);

}  // namespace tlsmon

#include "tlsmon/cloud_io.hpp"

#include "tlsmon/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tlsmon {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view token, double& value) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size();
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

// Splits into lines, tracking 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

void apply_origin_shift(PointCloud& cloud) {
  if (cloud.points.empty()) return;
  // Mean in long double so the shift itself is stable for large coordinates.
  long double sx = 0, sy = 0, sz = 0;
  for (const auto& p : cloud.points) {
    sx += p.x();
    sy += p.y();
    sz += p.z();
  }
  const auto n = static_cast<long double>(cloud.points.size());
  Point3 shift(std::round(static_cast<double>(sx / n)), std::round(static_cast<double>(sy / n)),
               std::round(static_cast<double>(sz / n)));
  for (auto& p : cloud.points) p -= shift;
  cloud.origin_shift = shift;
}

PointCloud parse_xyz(std::string_view bytes) {
  PointCloud cloud;
  LineReader reader(bytes);
  std::string_view line;
  std::vector<std::string> extra_names;
  bool names_from_header = false;
  std::size_t field_count = 0;
  std::vector<std::vector<double>> extras;
  while (reader.next(line)) {
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.front().front() == '#') {
      // "# x y z name..." names the extra columns.
      if (cloud.points.empty() && !names_from_header) {
        auto header = split_ws(line.substr(line.find('#') + 1));
        if (header.size() >= 3 && header[0] == "x" && header[1] == "y" && header[2] == "z") {
          for (std::size_t k = 3; k < header.size(); ++k) extra_names.emplace_back(header[k]);
          names_from_header = true;
        }
      }
      continue;
    }
    if (tokens.size() < 3) {
      throw Error(ErrorCode::Parse, "xyz parse error at line " + std::to_string(reader.line_no()) +
                                        ": expected at least 3 fields");
    }
    if (field_count == 0) {
      field_count = tokens.size();
      extras.resize(field_count - 3);
      if (!names_from_header || extra_names.size() != field_count - 3) {
        extra_names.clear();
        for (std::size_t k = 3; k < field_count; ++k) {
          extra_names.push_back(k == 3 ? "intensity" : "extra_" + std::to_string(k + 1));
        }
      }
    } else if (tokens.size() != field_count) {
      throw Error(ErrorCode::Parse, "xyz parse error at line " + std::to_string(reader.line_no()) +
                                        ": inconsistent field count");
    }
    double v[3];
    for (int k = 0; k < 3; ++k) {
      if (!parse_double(tokens[k], v[k]) || !std::isfinite(v[k])) {
        throw Error(ErrorCode::Parse, "xyz parse error at line " + std::to_string(reader.line_no()) +
                                          ": bad coordinate '" + std::string(tokens[k]) + "'");
      }
    }
    for (std::size_t k = 3; k < field_count; ++k) {
      double e;
      if (!parse_double(tokens[k], e)) {
        throw Error(ErrorCode::Parse, "xyz parse error at line " + std::to_string(reader.line_no()) +
                                          ": bad value '" + std::string(tokens[k]) + "'");
      }
      extras[k - 3].push_back(e);
    }
    cloud.points.emplace_back(v[0], v[1], v[2]);
  }
  for (std::size_t k = 0; k < extras.size(); ++k) cloud.scalars[extra_names[k]] = std::move(extras[k]);
  return cloud;
}

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

bool ply_type_from_name(std::string_view name, PlyType& type) {
  static const std::pair<std::string_view, PlyType> table[] = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  for (const auto& [n, t] : table) {
    if (n == name) {
      type = t;
      return true;
    }
  }
  return false;
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_binary(const char* p, PlyType t) {
  switch (t) {
    case PlyType::Int8: return load_le<std::int8_t>(p);
    case PlyType::UInt8: return load_le<std::uint8_t>(p);
    case PlyType::Int16: return load_le<std::int16_t>(p);
    case PlyType::UInt16: return load_le<std::uint16_t>(p);
    case PlyType::Int32: return load_le<std::int32_t>(p);
    case PlyType::UInt32: return load_le<std::uint32_t>(p);
    case PlyType::Float32: return load_le<float>(p);
    case PlyType::Float64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float64;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

}  // namespace

const std::vector<double>* PlyData::column(std::string_view name) const {
  for (std::size_t k = 0; k < vertex_property_names.size(); ++k) {
    if (vertex_property_names[k] == name) return &vertex_columns[k];
  }
  return nullptr;
}

PlyData parse_ply(std::string_view bytes) {
  LineReader reader(bytes);
  std::string_view line;
  if (!reader.next(line) || line != "ply") throw Error(ErrorCode::Format, "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  PlyData data;
  bool header_done = false;
  while (reader.next(line)) {
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tokens[0] == "comment" || tokens[0] == "obj_info") {
      auto pos = line.find(tokens[0]) + tokens[0].size();
      auto rest = line.substr(pos);
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      data.comments.emplace_back(rest);
    } else if (tokens[0] == "format") {
      if (tokens.size() < 2) throw Error(ErrorCode::Format, "malformed format line");
      if (tokens[1] == "ascii") {
        binary = false;
      } else if (tokens[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw Error(ErrorCode::Format, "unsupported PLY encoding '" + std::string(tokens[1]) + "'");
      }
      have_format = true;
    } else if (tokens[0] == "element") {
      if (tokens.size() != 3) throw Error(ErrorCode::Format, "malformed element line");
      PlyElement e;
      e.name = std::string(tokens[1]);
      if (std::from_chars(tokens[2].data(), tokens[2].data() + tokens[2].size(), e.count).ec != std::errc()) {
        throw Error(ErrorCode::Format, "bad element count");
      }
      elements.push_back(std::move(e));
    } else if (tokens[0] == "property") {
      if (elements.empty()) throw Error(ErrorCode::Format, "property before element");
      PlyProperty prop;
      if (tokens.size() == 5 && tokens[1] == "list") {
        prop.is_list = true;
        if (!ply_type_from_name(tokens[2], prop.count_type) || !ply_type_from_name(tokens[3], prop.type)) {
          throw Error(ErrorCode::Format, "unsupported PLY list type in '" + std::string(line) + "'");
        }
        prop.name = std::string(tokens[4]);
      } else if (tokens.size() == 3) {
        if (!ply_type_from_name(tokens[1], prop.type)) {
          throw Error(ErrorCode::Format, "unsupported PLY property type '" + std::string(tokens[1]) + "'");
        }
        prop.name = std::string(tokens[2]);
      } else {
        throw Error(ErrorCode::Format, "malformed property line");
      }
      elements.back().properties.push_back(std::move(prop));
    } else {
      throw Error(ErrorCode::Format, "unknown PLY header keyword '" + std::string(tokens[0]) + "'");
    }
  }
  if (!header_done || !have_format) throw Error(ErrorCode::Format, "incomplete PLY header");

  for (const auto& e : elements) {
    if (e.name != "vertex") continue;
    for (const auto& p : e.properties) {
      if (p.is_list) throw Error(ErrorCode::Format, "list property '" + p.name + "' on vertex element");
      if ((p.name == "x" || p.name == "y" || p.name == "z") && p.type != PlyType::Float32 &&
          p.type != PlyType::Float64) {
        throw Error(ErrorCode::Format, "vertex coordinate '" + p.name + "' must be float or double");
      }
      data.vertex_property_names.push_back(p.name);
    }
    data.vertex_columns.assign(e.properties.size(), std::vector<double>(e.count));
  }

  if (binary) {
    const char* cur = bytes.data() + reader.offset();
    const char* end = bytes.data() + bytes.size();
    for (const auto& e : elements) {
      const bool is_vertex = e.name == "vertex";
      const bool is_face = e.name == "face";
      for (std::size_t r = 0; r < e.count; ++r) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (!p.is_list) {
            const auto sz = ply_type_size(p.type);
            if (cur + sz > end) {
              throw Error(ErrorCode::Parse, "truncated binary PLY at " + e.name + " record " + std::to_string(r + 1));
            }
            if (is_vertex) data.vertex_columns[k][r] = read_binary(cur, p.type);
            cur += sz;
          } else {
            const auto csz = ply_type_size(p.count_type);
            if (cur + csz > end) {
              throw Error(ErrorCode::Parse, "truncated binary PLY at " + e.name + " record " + std::to_string(r + 1));
            }
            const auto n = static_cast<std::size_t>(read_binary(cur, p.count_type));
            cur += csz;
            const auto isz = ply_type_size(p.type);
            if (cur + n * isz > end) {
              throw Error(ErrorCode::Parse, "truncated binary PLY at " + e.name + " record " + std::to_string(r + 1));
            }
            if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
              if (n != 3) throw Error(ErrorCode::Format, "only triangular faces are supported");
              std::array<int, 3> f{};
              for (std::size_t j = 0; j < 3; ++j) f[j] = static_cast<int>(read_binary(cur + j * isz, p.type));
              data.faces.push_back(f);
            }
            cur += n * isz;
          }
        }
      }
    }
  } else {
    for (const auto& e : elements) {
      const bool is_vertex = e.name == "vertex";
      const bool is_face = e.name == "face";
      for (std::size_t r = 0; r < e.count; ++r) {
        if (!reader.next(line)) {
          throw Error(ErrorCode::Parse, "unexpected end of PLY data at " + e.name + " record " + std::to_string(r + 1));
        }
        auto tokens = split_ws(line);
        std::size_t t = 0;
        auto take = [&](double& v) {
          if (t >= tokens.size() || !parse_double(tokens[t], v)) {
            throw Error(ErrorCode::Parse, "PLY parse error at line " + std::to_string(reader.line_no()) + " (" +
                                              e.name + " record " + std::to_string(r + 1) + ")");
          }
          ++t;
        };
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          double v = 0;
          if (!p.is_list) {
            take(v);
            if (is_vertex) data.vertex_columns[k][r] = v;
          } else {
            take(v);
            const auto n = static_cast<std::size_t>(v);
            std::array<int, 3> f{};
            for (std::size_t j = 0; j < n; ++j) {
              take(v);
              if (j < 3) f[j] = static_cast<int>(v);
            }
            if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
              if (n != 3) throw Error(ErrorCode::Format, "only triangular faces are supported");
              data.faces.push_back(f);
            }
          }
        }
        if (t != tokens.size()) {
          throw Error(ErrorCode::Parse, "PLY parse error at line " + std::to_string(reader.line_no()) +
                                            ": trailing fields");
        }
      }
    }
  }
  return data;
}

std::string write_ply(const PlyData& data, PlyEncoding encoding) {
  std::string out = "ply\n";
  out += encoding == PlyEncoding::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  for (const auto& c : data.comments) out += "comment " + c + "\n";
  const auto n = data.vertex_count();
  out += "element vertex " + std::to_string(n) + "\n";
  for (const auto& name : data.vertex_property_names) out += "property double " + name + "\n";
  if (!data.faces.empty()) {
    out += "element face " + std::to_string(data.faces.size()) + "\n";
    out += "property list uchar int vertex_indices\n";
  }
  out += "end_header\n";
  const auto cols = data.vertex_columns.size();
  if (encoding == PlyEncoding::Ascii) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < cols; ++k) {
        if (k) out += ' ';
        append_double(out, data.vertex_columns[k][r]);
      }
      out += '\n';
    }
    for (const auto& f : data.faces) {
      out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
    }
  } else {
    out.reserve(out.size() + n * cols * 8 + data.faces.size() * 13);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < cols; ++k) {
        char buf[8];
        std::memcpy(buf, &data.vertex_columns[k][r], 8);
        out.append(buf, 8);
      }
    }
    for (const auto& f : data.faces) {
      out.push_back(static_cast<char>(3));
      for (int idx : f) {
        char buf[4];
        const std::int32_t v = idx;
        std::memcpy(buf, &v, 4);
        out.append(buf, 4);
      }
    }
  }
  return out;
}

PointCloud parse_cloud(std::string_view bytes, CloudFormat format) {
  PointCloud cloud;
  if (format == CloudFormat::XyzAscii) {
    cloud = parse_xyz(bytes);
  } else {
    const auto ply = parse_ply(bytes);
    const auto* xs = ply.column("x");
    const auto* ys = ply.column("y");
    const auto* zs = ply.column("z");
    if (!xs || !ys || !zs) throw Error(ErrorCode::Format, "PLY vertex element lacks x/y/z");
    const auto n = ply.vertex_count();
    cloud.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      cloud.points[i] = Point3((*xs)[i], (*ys)[i], (*zs)[i]);
      if (!cloud.points[i].allFinite()) {
        throw Error(ErrorCode::Parse, "non-finite coordinate at vertex record " + std::to_string(i + 1));
      }
    }
    const auto* nx = ply.column("nx");
    const auto* ny = ply.column("ny");
    const auto* nz = ply.column("nz");
    for (std::size_t k = 0; k < ply.vertex_property_names.size(); ++k) {
      const auto& name = ply.vertex_property_names[k];
      if (name == "x" || name == "y" || name == "z") continue;
      if (nx && ny && nz && (name == "nx" || name == "ny" || name == "nz")) continue;
      if (name == "label") {
        cloud.labels.emplace(n);
        for (std::size_t i = 0; i < n; ++i) (*cloud.labels)[i] = static_cast<Label>(ply.vertex_columns[k][i]);
        continue;
      }
      cloud.scalars[name] = ply.vertex_columns[k];
    }
    if (nx && ny && nz) {
      cloud.normals.emplace(n);
      cloud.normal_valid.emplace(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        Point3 v((*nx)[i], (*ny)[i], (*nz)[i]);
        const double len = v.norm();
        if (len > 0.5) {
          (*cloud.normals)[i] = v / len;
        } else {
          (*cloud.normals)[i] = Point3::UnitZ();
          (*cloud.normal_valid)[i] = 0;
        }
      }
    }
  }
  apply_origin_shift(cloud);
  return cloud;
}

std::string write_cloud(const PointCloud& cloud, CloudFormat format, bool include_scalars, PlyEncoding encoding) {
  const auto n = cloud.points.size();
  if (format == CloudFormat::XyzAscii) {
    std::string out = "# x y z";
    if (include_scalars) {
      for (const auto& [name, values] : cloud.scalars) out += " " + name;
    }
    out += '\n';
    for (std::size_t i = 0; i < n; ++i) {
      const Point3 p = cloud.points[i] + cloud.origin_shift;
      append_double(out, p.x());
      out += ' ';
      append_double(out, p.y());
      out += ' ';
      append_double(out, p.z());
      if (include_scalars) {
        for (const auto& [name, values] : cloud.scalars) {
          out += ' ';
          append_double(out, values[i]);
        }
      }
      out += '\n';
    }
    return out;
  }
  PlyData ply;
  ply.vertex_property_names = {"x", "y", "z"};
  ply.vertex_columns.assign(3, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Point3 p = cloud.points[i] + cloud.origin_shift;
    for (int k = 0; k < 3; ++k) ply.vertex_columns[k][i] = p[k];
  }
  if (cloud.normals) {
    for (int k = 0; k < 3; ++k) {
      ply.vertex_property_names.push_back(std::string("n") + "xyz"[k]);
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) {
        const bool ok = !cloud.normal_valid || (*cloud.normal_valid)[i];
        col[i] = ok ? (*cloud.normals)[i][k] : 0.0;
      }
      ply.vertex_columns.push_back(std::move(col));
    }
  }
  if (include_scalars) {
    for (const auto& [name, values] : cloud.scalars) {
      ply.vertex_property_names.push_back(name);
      ply.vertex_columns.push_back(values);
    }
    if (cloud.labels) {
      ply.vertex_property_names.push_back("label");
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = static_cast<double>((*cloud.labels)[i]);
      ply.vertex_columns.push_back(std::move(col));
    }
  }
  return write_ply(ply, encoding);
}

CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".ply") return CloudFormat::Ply;
  if (ext == ".xyz" || ext == ".txt" || ext == ".asc" || ext == ".pts") return CloudFormat::XyzAscii;
  throw Error(ErrorCode::Format, "cannot infer point format from '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PointCloud load_cloud(const std::filesystem::path& path) {
  auto cloud = parse_cloud(read_file(path), format_from_path(path));
  if (cloud.epoch_id.empty()) cloud.epoch_id = path.stem().string();
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud, bool include_scalars) {
  write_file(path, write_cloud(cloud, format_from_path(path), include_scalars));
}

}  // namespace tlsmon

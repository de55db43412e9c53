// File formats: binary histogram cubes (.sphc), text maps, point clouds, SIR
// files, scene directories and CSV tables.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sphl/core.hpp"
#include "sphl/format.hpp"
#include "sphl/types.hpp"

namespace sphl {

// ----------------------------------------------------------------------------
// Helpers
// ----------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to `path`.tmp and renames over `path`.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

namespace detail {
inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f64(std::string& b, double d) {
  std::uint64_t v = 0;
  std::memcpy(&v, &d, sizeof v);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  double d = 0.0;
  std::memcpy(&d, &v, sizeof d);
  return d;
}

inline std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}
}  // namespace detail

// ----------------------------------------------------------------------------
// .sphc cubes
// ----------------------------------------------------------------------------
inline constexpr std::uint32_t kCubeVersion = 1;
inline constexpr std::size_t kCubeHeaderBytes = 32;

inline std::string encode_cube(const HistogramCube& cube) {
  auto u32 = [](std::size_t v, const char* what) {
    if (v > 0xffffffffu) throw Error(std::string("cube ") + what + " exceeds u32");
    return static_cast<std::uint32_t>(v);
  };
  std::string b;
  b.reserve(kCubeHeaderBytes + cube.data().size() * 4);
  b.append("SPHC", 4);
  detail::put_u32(b, kCubeVersion);
  detail::put_u32(b, u32(cube.rows(), "rows"));
  detail::put_u32(b, u32(cube.cols(), "cols"));
  detail::put_u32(b, u32(cube.bins(), "bins"));
  detail::put_u32(b, u32(cube.wavelengths(), "wavelengths"));
  detail::put_f64(b, cube.bin_width_ps());
  for (std::uint32_t v : cube.data()) detail::put_u32(b, v);
  return b;
}

inline HistogramCube decode_cube(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kCubeHeaderBytes) {
    if (bytes.size() >= 4 && bytes.compare(0, 4, "SPHC") != 0) {
      throw LoadError("bad magic");
    }
    throw LoadError("truncated header: expected " + std::to_string(kCubeHeaderBytes) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.compare(0, 4, "SPHC") != 0) throw LoadError("bad magic");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kCubeVersion) {
    throw LoadError("unsupported version " + std::to_string(version));
  }
  const std::uint64_t rows = detail::get_u32(p + 8), cols = detail::get_u32(p + 12);
  const std::uint64_t bins = detail::get_u32(p + 16), kk = detail::get_u32(p + 20);
  const double width = detail::get_f64(p + 24);
  if (rows == 0 || cols == 0 || bins == 0 || kk == 0) {
    throw LoadError("zero dimension in header");
  }
  if (!std::isfinite(width) || !(width > 0.0)) throw LoadError("invalid bin width");
  // Overflow-checked element count.
  const std::uint64_t limit = (std::uint64_t{1} << 62) / 4;
  std::uint64_t count = rows;
  for (std::uint64_t f : {cols, bins, kk}) {
    if (count > limit / f) throw LoadError("dimension overflow");
    count *= f;
  }
  const std::uint64_t expected = kCubeHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw LoadError("truncated payload: expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw LoadError("trailing bytes: expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  HistogramCube cube(rows, cols, bins, kk, width);
  const unsigned char* q = p + kCubeHeaderBytes;
  for (std::size_t i = 0; i < cube.data().size(); ++i) {
    cube.data()[i] = detail::get_u32(q + 4 * i);
  }
  return cube;
}

inline void save_cube(const HistogramCube& cube, const std::string& path) {
  write_file_atomic(path, encode_cube(cube));
}
inline HistogramCube load_cube(const std::string& path) {
  return decode_cube(read_file(path));
}

// ----------------------------------------------------------------------------
// Map files
// ----------------------------------------------------------------------------
enum class MapSemantic { depth, reflectivity, uncertainty, mask };

inline std::string to_string(MapSemantic s) {
  switch (s) {
    case MapSemantic::depth: return "depth";
    case MapSemantic::reflectivity: return "reflectivity";
    case MapSemantic::uncertainty: return "uncertainty";
    case MapSemantic::mask: return "mask";
  }
  return "depth";
}

inline MapSemantic parse_semantic(const std::string& s) {
  if (s == "depth") return MapSemantic::depth;
  if (s == "reflectivity") return MapSemantic::reflectivity;
  if (s == "uncertainty") return MapSemantic::uncertainty;
  if (s == "mask") return MapSemantic::mask;
  throw LoadError("unknown map semantic '" + s + "'");
}

struct MapFile {
  Map map;
  MapSemantic semantic{MapSemantic::depth};
  std::string unit{"bins"};

  bool operator==(const MapFile& o) const {
    if (semantic != o.semantic || unit != o.unit ||
        !map.same_shape(o.map.rows(), o.map.cols(), o.map.channels())) {
      return false;
    }
    for (std::size_t i = 0; i < map.data().size(); ++i) {
      const double a = map.data()[i], b = o.map.data()[i];
      if (!(a == b || (std::isnan(a) && std::isnan(b)))) return false;
    }
    return true;
  }
};

/// Header lines "sphl-map 1", rows, cols, channels, semantic, unit; then one
/// line per image row with channels interleaved per pixel.
/// nan marks no-target depth; +inf is an uncertainty with no information.
inline bool representable(double v, MapSemantic s) {
  if (std::isnan(v)) return s == MapSemantic::depth;
  if (std::isinf(v)) return v > 0.0 && s == MapSemantic::uncertainty;
  return true;
}

inline std::string encode_map(const MapFile& mf) {
  const Map& m = mf.map;
  if (mf.unit.empty() || mf.unit.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error("map unit must be a single non-empty token");
  }
  std::string out = "sphl-map 1\nrows " + std::to_string(m.rows()) + "\ncols " +
                    std::to_string(m.cols()) + "\nchannels " +
                    std::to_string(m.channels()) + "\nsemantic " +
                    to_string(mf.semantic) + "\nunit " + mf.unit + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      for (std::size_t k = 0; k < m.channels(); ++k) {
        const double v = m.at(r, c, k);
        if (!representable(v, mf.semantic)) {
          throw Error("map value not representable for semantic " +
                      to_string(mf.semantic));
        }
        if (c || k) out += ' ';
        out += format_shortest(v);
      }
    }
    out += '\n';
  }
  return out;
}

inline MapFile decode_map(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto header = [&](const std::string& key) {
    if (!std::getline(in, line)) throw LoadError("map: missing header line '" + key + "'");
    const auto t = detail::tokens(line);
    if (t.size() != 2 || t[0] != key) {
      throw LoadError("map: expected header '" + key + " <value>', got '" + line + "'");
    }
    return t[1];
  };
  if (header("sphl-map") != "1") throw LoadError("map: unsupported version");
  auto dim = [&](const std::string& key) {
    const auto v = parse_int<std::size_t>(header(key));
    if (!v || *v == 0) throw LoadError("map: bad " + key);
    return *v;
  };
  const std::size_t rows = dim("rows"), cols = dim("cols"), ch = dim("channels");
  MapFile mf;
  mf.semantic = parse_semantic(header("semantic"));
  mf.unit = header("unit");
  mf.map = Map(rows, cols, ch);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) {
      throw LoadError("map: expected " + std::to_string(rows) + " data rows, got " +
                      std::to_string(r));
    }
    const auto t = detail::tokens(line);
    if (t.size() != cols * ch) {
      throw LoadError("map: row " + std::to_string(r) + " has " +
                      std::to_string(t.size()) + " values, expected " +
                      std::to_string(cols * ch));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto v = parse_double(t[i]);
      if (!v) throw LoadError("map: bad value '" + t[i] + "'");
      if (!representable(*v, mf.semantic)) {
        throw LoadError("map: value '" + t[i] + "' not allowed in a " +
                        to_string(mf.semantic) + " map");
      }
      mf.map.data()[r * cols * ch + i] = *v;
    }
  }
  while (std::getline(in, line)) {
    if (!detail::tokens(line).empty()) throw LoadError("map: trailing data");
  }
  return mf;
}

inline void save_map(const Map& m, MapSemantic semantic, const std::string& unit,
                     const std::string& path) {
  write_file_atomic(path, encode_map(MapFile{m, semantic, unit}));
}
inline MapFile load_map(const std::string& path) { return decode_map(read_file(path)); }

/// A guide file holds all scales as channels: L for depth, L*K for
/// reflectivity (channel l*K + k). Values must be finite and >= 0.
inline std::vector<Map> load_external_guide(const std::string& path, std::size_t rows,
                                            std::size_t cols, std::size_t levels,
                                            std::size_t wavelengths) {
  const auto mf = load_map(path);
  if (!mf.map.same_shape(rows, cols, levels * wavelengths)) {
    throw LoadError("guide '" + path + "': expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + "x" + std::to_string(levels * wavelengths) +
                    ", got " + std::to_string(mf.map.rows()) + "x" +
                    std::to_string(mf.map.cols()) + "x" +
                    std::to_string(mf.map.channels()));
  }
  for (double v : mf.map.data()) {
    if (!std::isfinite(v)) throw LoadError("guide '" + path + "': non-finite value");
    if (v < 0.0) throw LoadError("guide '" + path + "': negative value");
  }
  std::vector<Map> out(levels, Map(rows, cols, wavelengths));
  for (std::size_t n = 0; n < rows * cols; ++n)
    for (std::size_t l = 0; l < levels; ++l)
      for (std::size_t k = 0; k < wavelengths; ++k)
        out[l](n, k) = mf.map(n, l * wavelengths + k);
  return out;
}

inline Map stack_guides(const std::vector<Map>& guides) {
  const std::size_t levels = guides.size(), kk = guides.at(0).channels();
  Map out(guides[0].rows(), guides[0].cols(), levels * kk);
  for (std::size_t n = 0; n < out.pixels(); ++n)
    for (std::size_t l = 0; l < levels; ++l)
      for (std::size_t k = 0; k < kk; ++k) out(n, l * kk + k) = guides[l](n, k);
  return out;
}

// ----------------------------------------------------------------------------
// Point clouds
// ----------------------------------------------------------------------------
struct PointCloud {
  std::size_t rows{0}, cols{0}, wavelengths{0};
  struct Point {
    std::size_t x{0}, y{0};  // column, row
    double depth{0.0};
    std::vector<double> intensity;
    double depth_uncertainty{0.0};
    bool operator==(const Point&) const = default;
  };
  std::vector<Point> points;
  bool operator==(const PointCloud&) const = default;
};

inline PointCloud make_point_cloud(const Map& depth, const Map& reflectivity,
                                   const Map& depth_uncertainty, const Mask& mask) {
  const std::size_t rows = depth.rows(), cols = depth.cols();
  if (!reflectivity.same_shape(rows, cols, reflectivity.channels()) ||
      !depth_uncertainty.same_shape(rows, cols, 1) || !mask.same_shape(rows, cols, 1) ||
      depth.channels() != 1) {
    throw Error("point cloud: map dimensions disagree");
  }
  PointCloud pc{rows, cols, reflectivity.channels(), {}};
  for (std::size_t n = 0; n < rows * cols; ++n) {
    if (!mask(n)) continue;
    PointCloud::Point p;
    p.x = n % cols;
    p.y = n / cols;
    p.depth = depth(n);
    for (std::size_t k = 0; k < pc.wavelengths; ++k) p.intensity.push_back(reflectivity(n, k));
    p.depth_uncertainty = depth_uncertainty(n);
    pc.points.push_back(std::move(p));
  }
  return pc;
}

inline std::string encode_point_cloud(const PointCloud& pc) {
  std::string out = "# sphl-points 1\n# rows " + std::to_string(pc.rows) + " cols " +
                    std::to_string(pc.cols) + " wavelengths " +
                    std::to_string(pc.wavelengths) + " points " +
                    std::to_string(pc.points.size()) + "\n# x y depth";
  for (std::size_t k = 0; k < pc.wavelengths; ++k) out += " i_" + std::to_string(k);
  out += " depth_uncertainty\n";
  for (const auto& p : pc.points) {
    out += std::to_string(p.x) + ' ' + std::to_string(p.y) + ' ' + format_shortest(p.depth);
    for (double v : p.intensity) out += ' ' + format_shortest(v);
    out += ' ' + format_shortest(p.depth_uncertainty) + '\n';
  }
  return out;
}

inline PointCloud decode_point_cloud(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "# sphl-points 1") {
    throw LoadError("point cloud: bad magic line");
  }
  if (!std::getline(in, line)) throw LoadError("point cloud: missing dimensions");
  const auto t = detail::tokens(line);
  if (t.size() != 9 || t[0] != "#" || t[1] != "rows" || t[3] != "cols" ||
      t[5] != "wavelengths" || t[7] != "points") {
    throw LoadError("point cloud: bad dimension line '" + line + "'");
  }
  PointCloud pc;
  const auto rows = parse_int<std::size_t>(t[2]), cols = parse_int<std::size_t>(t[4]);
  const auto kk = parse_int<std::size_t>(t[6]), np = parse_int<std::size_t>(t[8]);
  if (!rows || !cols || !kk || !np) throw LoadError("point cloud: bad dimensions");
  pc.rows = *rows;
  pc.cols = *cols;
  pc.wavelengths = *kk;
  if (!std::getline(in, line)) throw LoadError("point cloud: missing column line");
  const std::size_t ncol = 4 + pc.wavelengths;
  if (detail::tokens(line).size() != ncol + 1) {
    throw LoadError("point cloud: column line does not match wavelengths");
  }
  for (std::size_t i = 0; i < *np; ++i) {
    if (!std::getline(in, line)) {
      throw LoadError("point cloud: expected " + std::to_string(*np) + " points, got " +
                      std::to_string(i));
    }
    const auto v = detail::tokens(line);
    if (v.size() != ncol) throw LoadError("point cloud: wrong column count on point line");
    PointCloud::Point p;
    const auto x = parse_int<std::size_t>(v[0]), y = parse_int<std::size_t>(v[1]);
    if (!x || !y || *x >= pc.cols || *y >= pc.rows) {
      throw LoadError("point cloud: bad pixel coordinates");
    }
    p.x = *x;
    p.y = *y;
    auto num = [&](const std::string& s) {
      const auto d = parse_double(s);
      if (!d) throw LoadError("point cloud: bad value '" + s + "'");
      return *d;
    };
    p.depth = num(v[2]);
    for (std::size_t k = 0; k < pc.wavelengths; ++k) p.intensity.push_back(num(v[3 + k]));
    p.depth_uncertainty = num(v[3 + pc.wavelengths]);
    pc.points.push_back(std::move(p));
  }
  while (std::getline(in, line)) {
    if (!detail::tokens(line).empty()) throw LoadError("point cloud: trailing data");
  }
  return pc;
}

inline void export_point_cloud(const Map& depth, const Map& reflectivity,
                               const Map& depth_uncertainty, const Mask& mask,
                               const std::string& path) {
  write_file_atomic(path, encode_point_cloud(
                              make_point_cloud(depth, reflectivity, depth_uncertainty, mask)));
}

// ----------------------------------------------------------------------------
// SIR files: one line of samples per wavelength
// ----------------------------------------------------------------------------
inline std::string encode_sir(const ImpulseResponse& sir) {
  std::string out;
  for (const auto& ch : sir.channels) {
    for (std::size_t j = 0; j < ch.samples.size(); ++j) {
      if (j) out += ' ';
      out += format_shortest(ch.samples[j]);
    }
    out += '\n';
  }
  return out;
}

inline ImpulseResponse decode_sir(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto t = detail::tokens(line);
    if (t.empty() || t[0].front() == '#') continue;
    std::vector<double> row;
    for (const auto& s : t) {
      const auto v = parse_double(s);
      if (!v) throw InvalidSir("SIR file: bad value '" + s + "'");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  return fit_sir(rows);
}

inline void save_sir(const ImpulseResponse& sir, const std::string& path) {
  write_file_atomic(path, encode_sir(sir));
}
inline ImpulseResponse load_sir(const std::string& path) {
  return decode_sir(read_file(path));
}

// ----------------------------------------------------------------------------
// Scene directories
// ----------------------------------------------------------------------------
inline void save_scene(const SceneGroundTruth& s, const std::string& dir,
                       const std::string& reflectivity_unit = "photons") {
  std::filesystem::create_directories(dir);
  Map depth = s.depth;
  for (std::size_t n = 0; n < s.pixels(); ++n) {
    if (!s.mask(n)) depth(n) = std::numeric_limits<double>::quiet_NaN();
  }
  Map mask(s.rows(), s.cols(), 1);
  for (std::size_t n = 0; n < s.pixels(); ++n) mask(n) = s.mask(n);
  save_map(depth, MapSemantic::depth, "bins", dir + "/truth_depth.map");
  save_map(s.reflectivity, MapSemantic::reflectivity, reflectivity_unit,
           dir + "/truth_reflectivity.map");
  save_map(mask, MapSemantic::mask, "flag", dir + "/truth_mask.map");
}

inline SceneGroundTruth load_scene(const std::string& dir) {
  const auto depth = load_map(dir + "/truth_depth.map");
  const auto refl = load_map(dir + "/truth_reflectivity.map");
  const auto mask = load_map(dir + "/truth_mask.map");
  if (depth.semantic != MapSemantic::depth || refl.semantic != MapSemantic::reflectivity ||
      mask.semantic != MapSemantic::mask) {
    throw LoadError("scene '" + dir + "': map semantics do not match file names");
  }
  SceneGroundTruth s;
  s.depth = depth.map;
  s.reflectivity = refl.map;
  s.mask = Mask(depth.map.rows(), depth.map.cols());
  if (!mask.map.same_shape(depth.map.rows(), depth.map.cols(), 1)) {
    throw LoadError("scene '" + dir + "': mask dimensions disagree");
  }
  for (std::size_t n = 0; n < s.pixels(); ++n) {
    const double v = mask.map(n);
    if (v != 0.0 && v != 1.0) throw LoadError("scene '" + dir + "': mask must be 0/1");
    s.mask(n) = v != 0.0 ? 1 : 0;
    if (!s.mask(n) && std::isnan(s.depth(n))) continue;
    if (std::isnan(s.depth(n))) throw LoadError("scene '" + dir + "': nan depth on target");
  }
  if (!s.reflectivity.same_shape(s.rows(), s.cols(), s.reflectivity.channels())) {
    throw LoadError("scene '" + dir + "': reflectivity dimensions disagree");
  }
  return s;
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------
inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out + '\n';
}

}  // namespace sphl

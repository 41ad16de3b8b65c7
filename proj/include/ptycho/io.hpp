#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ptycho/error.hpp"
#include "ptycho/field.hpp"
#include "ptycho/lattice.hpp"

namespace ptycho::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Every array is stored as a JSON manifest next to a raw little-endian f64
// file; complex values are interleaved (re, im).

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline void write_f64(std::ofstream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  os.write(buf, 8);
}

inline std::vector<double> read_f64_file(const fs::path& path, std::size_t expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open data file " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (raw.size() != expected * 8)
    throw DataError(path.string() + ": expected " + std::to_string(expected * 8) + " bytes, found " +
                    std::to_string(raw.size()));
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, raw.data() + 8 * i, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline std::ofstream open_out(const fs::path& path, bool binary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

inline void write_json(const fs::path& path, const json& j) {
  auto os = open_out(path, false);
  os << j.dump(2) << '\n';
}

inline void write_values(const fs::path& path, std::span<const cplx> v) {
  auto os = open_out(path, true);
  for (const auto& x : v) {
    write_f64(os, x.real());
    write_f64(os, x.imag());
  }
}

inline void write_values(const fs::path& path, std::span<const double> v) {
  auto os = open_out(path, true);
  for (double x : v) write_f64(os, x);
}

inline fs::path data_path(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

template <class T>
T get(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw DataError(where.string() + ": manifest lacks \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where.string() + ": bad \"" + key + "\": " + e.what());
  }
}

inline json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline std::vector<cplx> to_complex(const std::vector<double>& raw) {
  std::vector<cplx> out(raw.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {raw[2 * i], raw[2 * i + 1]};
  return out;
}

}  // namespace detail

/// Writes `<stem>.json` + `<stem>.bin`; `manifest` is the .json path.
inline void save_field(const fs::path& manifest, const ComplexField& u) {
  detail::write_json(manifest, json{{"rows", u.rows()},
                                    {"cols", u.cols()},
                                    {"dtype", "f64"},
                                    {"layout", "row-major"},
                                    {"content", "complex"},
                                    {"data", detail::data_path(manifest).filename().string()}});
  detail::write_values(detail::data_path(manifest), u.span());
}

inline ComplexField load_field(const fs::path& manifest) {
  const json j = detail::read_json_file(manifest);
  const auto rows = detail::get<std::size_t>(j, "rows", manifest);
  const auto cols = detail::get<std::size_t>(j, "cols", manifest);
  if (j.value("content", "complex") != "complex") throw DataError(manifest.string() + ": expected complex content");
  const auto raw = detail::read_f64_file(manifest.parent_path() / j.value("data", detail::data_path(manifest).filename().string()),
                                         2 * rows * cols);
  return ComplexField(rows, cols, detail::to_complex(raw));
}

/// Nonnegative real stack; `content` is "intensity" or "magnitude".
inline void save_real_stack(const fs::path& manifest, const RealStack& f, const std::string& content) {
  detail::write_json(manifest, json{{"J", f.frames()},
                                    {"frame_side", f.side()},
                                    {"dtype", "f64"},
                                    {"layout", "frame-major row-major"},
                                    {"content", content},
                                    {"data", detail::data_path(manifest).filename().string()}});
  detail::write_values(detail::data_path(manifest), f.span());
}

inline void save_intensity(const fs::path& manifest, const RealStack& f) { save_real_stack(manifest, f, "intensity"); }

inline void save_complex_stack(const fs::path& manifest, const ComplexStack& z) {
  detail::write_json(manifest, json{{"J", z.frames()},
                                    {"frame_side", z.side()},
                                    {"dtype", "f64"},
                                    {"layout", "frame-major row-major"},
                                    {"content", "complex"},
                                    {"data", detail::data_path(manifest).filename().string()}});
  detail::write_values(detail::data_path(manifest), z.span());
}

namespace detail {

inline std::pair<json, fs::path> stack_header(const fs::path& manifest, const char* content) {
  json j = read_json_file(manifest);
  if (get<std::string>(j, "dtype", manifest) != "f64") throw DataError(manifest.string() + ": dtype must be f64");
  if (get<std::string>(j, "content", manifest) != content)
    throw DataError(manifest.string() + ": expected content \"" + content + "\"");
  fs::path data = manifest.parent_path() / j.value("data", data_path(manifest).filename().string());
  return {std::move(j), std::move(data)};
}

}  // namespace detail

inline RealStack load_real_stack(const fs::path& manifest, const std::string& content) {
  auto [j, data] = detail::stack_header(manifest, content.c_str());
  const auto frames = detail::get<std::size_t>(j, "J", manifest);
  const auto side = detail::get<std::size_t>(j, "frame_side", manifest);
  RealStack f(frames, side, detail::read_f64_file(data, frames * side * side));
  for (double v : f.values())
    if (!(v >= 0.0)) throw DataError(manifest.string() + ": " + content + " values must be nonnegative and finite");
  return f;
}

inline RealStack load_intensity(const fs::path& manifest) { return load_real_stack(manifest, "intensity"); }

inline ComplexStack load_complex_stack(const fs::path& manifest) {
  auto [j, data] = detail::stack_header(manifest, "complex");
  const auto frames = detail::get<std::size_t>(j, "J", manifest);
  const auto side = detail::get<std::size_t>(j, "frame_side", manifest);
  return ComplexStack(frames, side, detail::to_complex(detail::read_f64_file(data, 2 * frames * side * side)));
}

inline json lattice_to_json(const ScanLattice& lat) {
  json pos = json::array();
  for (const auto& p : lat.positions) pos.push_back({p.row, p.col});
  return json{{"kind", std::string(to_string(lat.kind))},
              {"image_side", lat.image_side},
              {"frame_side", lat.frame_side},
              {"dist", lat.dist},
              {"seed", lat.seed},
              {"positions", std::move(pos)}};
}

inline ScanLattice lattice_from_json(const json& j, const fs::path& where = "lattice") {
  ScanLattice lat;
  lat.kind = parse_lattice_kind(detail::get<std::string>(j, "kind", where));
  lat.image_side = detail::get<int>(j, "image_side", where);
  lat.frame_side = detail::get<int>(j, "frame_side", where);
  lat.dist = detail::get<int>(j, "dist", where);
  lat.seed = detail::get<std::uint64_t>(j, "seed", where);
  for (const auto& p : detail::get<std::vector<std::vector<int>>>(j, "positions", where)) {
    if (p.size() != 2) throw DataError(where.string() + ": each position must be [row, col]");
    lat.positions.push_back({p[0], p[1]});
  }
  try {
    validate(lat);
  } catch (const ConfigError& e) {
    throw DataError(where.string() + ": " + e.what());
  }
  return lat;
}

inline void save_lattice(const fs::path& path, const ScanLattice& lat) { detail::write_json(path, lattice_to_json(lat)); }

inline ScanLattice load_lattice(const fs::path& path) { return lattice_from_json(detail::read_json_file(path), path); }

/// 8-bit binary PGM of `values` scaled by 255 / max; returns that max.
inline double save_pgm(const fs::path& path, std::size_t rows, std::size_t cols, std::span<const double> values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, v);
  auto os = detail::open_out(path, true);
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (double v : values) {
    const double s = peak > 0.0 ? v / peak : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0))));
  }
  return peak;
}

}  // namespace ptycho::io

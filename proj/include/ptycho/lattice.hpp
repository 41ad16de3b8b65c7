#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ptycho/error.hpp"
#include "ptycho/field.hpp"

namespace ptycho {

enum class LatticeKind { square, hexagonal, random };

inline std::string_view to_string(LatticeKind k) {
  switch (k) {
    case LatticeKind::square: return "square";
    case LatticeKind::hexagonal: return "hexagonal";
    case LatticeKind::random: return "random";
  }
  return "square";
}

inline LatticeKind parse_lattice_kind(std::string_view s) {
  if (s == "square") return LatticeKind::square;
  if (s == "hexagonal" || s == "hex") return LatticeKind::hexagonal;
  if (s == "random") return LatticeKind::random;
  throw ConfigError("unknown lattice kind '" + std::string(s) + "'");
}

struct ScanPosition {
  int row = 0;
  int col = 0;
  friend bool operator==(const ScanPosition&, const ScanPosition&) = default;
};

/// Scan positions on a periodic image of side `image_side`. Frame j covers
/// rows positions[j].row + [0, frame_side) and likewise for columns, taken
/// modulo image_side.
struct ScanLattice {
  LatticeKind kind = LatticeKind::square;
  int image_side = 0;
  int frame_side = 0;
  int dist = 0;
  std::uint64_t seed = 0;
  std::vector<ScanPosition> positions;

  std::size_t size() const noexcept { return positions.size(); }
  std::size_t image_pixels() const noexcept {
    return static_cast<std::size_t>(image_side) * static_cast<std::size_t>(image_side);
  }
  std::size_t frame_pixels() const noexcept {
    return static_cast<std::size_t>(frame_side) * static_cast<std::size_t>(frame_side);
  }

  friend bool operator==(const ScanLattice&, const ScanLattice&) = default;
};

namespace detail {

inline int wrap(int v, int side) {
  const int r = v % side;
  return r < 0 ? r + side : r;
}

inline void check_lattice_sizes(int image_side, int frame_side, int dist) {
  if (dist < 1 || frame_side < dist || image_side < frame_side)
    throw ConfigError("lattice requires 1 <= dist <= frame_side <= image_side (got dist=" +
                      std::to_string(dist) + ", frame_side=" + std::to_string(frame_side) +
                      ", image_side=" + std::to_string(image_side) + ")");
  if (image_side % dist != 0)
    throw ConfigError("image_side " + std::to_string(image_side) + " is not divisible by dist " +
                      std::to_string(dist) + "; periodic coverage would be uneven");
}

}  // namespace detail

/// Raster grid {(i*dist, j*dist)}, lexicographic order.
inline ScanLattice make_square_lattice(int image_side, int frame_side, int dist) {
  detail::check_lattice_sizes(image_side, frame_side, dist);
  ScanLattice lat{LatticeKind::square, image_side, frame_side, dist, 0, {}};
  const int per_axis = image_side / dist;
  lat.positions.reserve(static_cast<std::size_t>(per_axis) * per_axis);
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j) lat.positions.push_back({i * dist, j * dist});
  return lat;
}

/// Square lattice with each position moved by an integer offset in
/// {-1, 0, 1} per axis, wrapped periodically. Offsets come from a
/// mt19937_64 stream seeded with `seed`, two draws per position (row, col).
inline ScanLattice make_random_lattice(int image_side, int frame_side, int dist, std::uint64_t seed) {
  ScanLattice lat = make_square_lattice(image_side, frame_side, dist);
  lat.kind = LatticeKind::random;
  lat.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& p : lat.positions) {
    const int dr = static_cast<int>(rng() % 3) - 1;
    const int dc = static_cast<int>(rng() % 3) - 1;
    p.row = detail::wrap(p.row + dr, image_side);
    p.col = detail::wrap(p.col + dc, image_side);
  }
  return lat;
}

/// Rows spaced dist apart; odd rows shifted right by dist/2 columns.
inline ScanLattice make_hexagonal_lattice(int image_side, int frame_side, int dist) {
  detail::check_lattice_sizes(image_side, frame_side, dist);
  if (image_side % (2 * dist) != 0)
    throw ConfigError("hexagonal lattice needs image_side divisible by 2*dist (got " +
                      std::to_string(image_side) + ", dist " + std::to_string(dist) + ")");
  ScanLattice lat = make_square_lattice(image_side, frame_side, dist);
  lat.kind = LatticeKind::hexagonal;
  const int shift = dist / 2;
  for (auto& p : lat.positions)
    if ((p.row / dist) % 2 == 1) p.col = detail::wrap(p.col + shift, image_side);
  return lat;
}

inline ScanLattice make_lattice(LatticeKind kind, int image_side, int frame_side, int dist,
                                std::uint64_t seed = 0) {
  switch (kind) {
    case LatticeKind::square: return make_square_lattice(image_side, frame_side, dist);
    case LatticeKind::hexagonal: return make_hexagonal_lattice(image_side, frame_side, dist);
    case LatticeKind::random: return make_random_lattice(image_side, frame_side, dist, seed);
  }
  throw ConfigError("unknown lattice kind");
}

/// Structural checks used after deserialization.
inline void validate(const ScanLattice& lat) {
  if (lat.positions.empty()) throw ConfigError("lattice has no positions");
  if (lat.frame_side < 1 || lat.frame_side > lat.image_side)
    throw ConfigError("lattice requires 1 <= frame_side <= image_side");
  for (const auto& p : lat.positions)
    if (p.row < 0 || p.col < 0 || p.row >= lat.image_side || p.col >= lat.image_side)
      throw ConfigError("lattice position out of [0, image_side)");
}

namespace detail {

inline void check_index(const ScanLattice& lat, std::size_t j) {
  if (j >= lat.size())
    throw std::out_of_range("frame index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(lat.size()) + ")");
}

template <class T>
void check_image(const Grid<T>& u, const ScanLattice& lat) {
  if (u.rows() != static_cast<std::size_t>(lat.image_side) ||
      u.cols() != static_cast<std::size_t>(lat.image_side))
    throw DataError("image is " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()) +
                    ", lattice expects " + std::to_string(lat.image_side) + "^2");
}

template <class T>
void check_frame(const Grid<T>& w, const ScanLattice& lat) {
  if (w.rows() != static_cast<std::size_t>(lat.frame_side) ||
      w.cols() != static_cast<std::size_t>(lat.frame_side))
    throw DataError("frame is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                    ", lattice expects " + std::to_string(lat.frame_side) + "^2");
}

}  // namespace detail

/// Calls fn(frame_index, image_index) over the window of frame j.
template <class Fn>
void for_each_window_pixel(const ScanLattice& lat, std::size_t j, Fn&& fn) {
  const auto& p = lat.positions[j];
  const int n = lat.image_side;
  const int m = lat.frame_side;
  std::size_t t = 0;
  for (int r = 0; r < m; ++r) {
    int rr = p.row + r;
    if (rr >= n) rr -= n;
    const std::size_t base = static_cast<std::size_t>(rr) * static_cast<std::size_t>(n);
    int cc = p.col;
    for (int c = 0; c < m; ++c, ++t) {
      fn(t, base + static_cast<std::size_t>(cc));
      if (++cc == n) cc = 0;
    }
  }
}

/// S_j u written into `out` (frame_side^2 values).
template <class T>
void extract_frame_into(const Grid<T>& u, const ScanLattice& lat, std::size_t j, std::span<T> out) {
  for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { out[t] = u[i]; });
}

/// S_j u: the frame_side x frame_side window anchored at positions[j].
template <class T>
Grid<T> extract_frame(const Grid<T>& u, const ScanLattice& lat, std::size_t j) {
  detail::check_index(lat, j);
  detail::check_image(u, lat);
  Grid<T> out(static_cast<std::size_t>(lat.frame_side), static_cast<std::size_t>(lat.frame_side));
  extract_frame_into<T>(u, lat, j, out.span());
  return out;
}

/// target += S_j^T frame.
template <class T>
void accumulate_frame_span(Grid<T>& target, std::span<const T> frame, const ScanLattice& lat,
                           std::size_t j) {
  for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { target[i] += frame[t]; });
}

/// target += S_j^T frame. Mutates `target` in place.
template <class T>
void accumulate_frame(Grid<T>& target, const Grid<T>& frame, const ScanLattice& lat, std::size_t j) {
  detail::check_index(lat, j);
  detail::check_image(target, lat);
  detail::check_frame(frame, lat);
  accumulate_frame_span<T>(target, frame.span(), lat, j);
}

/// sum_j S_j^T S_j 1: how many frames cover each image pixel.
inline RealField coverage_count(const ScanLattice& lat) {
  RealField cover(static_cast<std::size_t>(lat.image_side), static_cast<std::size_t>(lat.image_side));
  for (std::size_t j = 0; j < lat.size(); ++j)
    for_each_window_pixel(lat, j, [&](std::size_t, std::size_t i) { cover[i] += 1.0; });
  return cover;
}

/// Denominators of the closed-form probe and image updates.
struct OverlapMaps {
  RealField image_overlap;  ///< sum_j S_j^T |omega|^2, image-sized
  RealField probe_overlap;  ///< sum_j |S_j u|^2, frame-sized
};

/// sum_j |S_j u|^2 over the frame grid.
inline RealField probe_overlap(const ComplexField& u, const ScanLattice& lat) {
  detail::check_image(u, lat);
  const auto m = static_cast<std::size_t>(lat.frame_side);
  RealField acc(m, m);
  for (std::size_t j = 0; j < lat.size(); ++j)
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { acc[t] += std::norm(u[i]); });
  return acc;
}

/// sum_j S_j^T |omega|^2 over the image grid.
inline RealField image_overlap(const ComplexField& omega, const ScanLattice& lat) {
  detail::check_frame(omega, lat);
  RealField acc(static_cast<std::size_t>(lat.image_side), static_cast<std::size_t>(lat.image_side));
  std::vector<double> w2(omega.size());
  for (std::size_t t = 0; t < omega.size(); ++t) w2[t] = std::norm(omega[t]);
  for (std::size_t j = 0; j < lat.size(); ++j)
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { acc[i] += w2[t]; });
  return acc;
}

inline OverlapMaps compute_overlap_maps(const ComplexField& omega, const ComplexField& u,
                                        const ScanLattice& lat) {
  return {image_overlap(omega, lat), probe_overlap(u, lat)};
}

}  // namespace ptycho

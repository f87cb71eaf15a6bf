#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snappix/common.hpp"

namespace snappix {

// T x M x M exposure bits for one tile; replicated over the frame by expand().
struct TilePattern {
  std::size_t T = 0;
  std::size_t M = 0;
  std::vector<std::uint8_t> bits;  // index (t*M + r)*M + c
  std::optional<std::uint64_t> seed;

  TilePattern() = default;
  TilePattern(std::size_t t, std::size_t m, std::uint8_t fill = 0)
      : T(t), M(m), bits(t * m * m, fill) {}

  std::uint8_t& at(std::size_t t, std::size_t r, std::size_t c) { return bits[(t * M + r) * M + c]; }
  std::uint8_t at(std::size_t t, std::size_t r, std::size_t c) const { return bits[(t * M + r) * M + c]; }

  // Bits of slot t in pixel order k = r*M + c.
  std::vector<std::uint8_t> slot(std::size_t t) const {
    return {bits.begin() + static_cast<std::ptrdiff_t>(t * M * M),
            bits.begin() + static_cast<std::ptrdiff_t>((t + 1) * M * M)};
  }

  friend bool operator==(const TilePattern& a, const TilePattern& b) {
    return a.T == b.T && a.M == b.M && a.bits == b.bits;
  }
};

// T x H x W mask.
struct FullMask {
  std::size_t T = 0;
  std::size_t H = 0;
  std::size_t W = 0;
  std::vector<std::uint8_t> bits;  // index (t*H + i)*W + j

  FullMask() = default;
  FullMask(std::size_t t, std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : T(t), H(h), W(w), bits(t * h * w, fill) {}

  std::uint8_t& at(std::size_t t, std::size_t i, std::size_t j) { return bits[(t * H + i) * W + j]; }
  std::uint8_t at(std::size_t t, std::size_t i, std::size_t j) const { return bits[(t * H + i) * W + j]; }
};

inline void validate(const TilePattern& p) {
  if (p.T == 0 || p.M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  if (p.bits.size() != p.T * p.M * p.M) throw ValidationError("pattern bit count does not match T*M*M");
  for (auto b : p.bits)
    if (b > 1) throw ValidationError("pattern bit outside {0,1}");
}

// Per-position exposure count, M x M row-major.
inline std::vector<std::uint32_t> exposure_count(const TilePattern& p) {
  std::vector<std::uint32_t> count(p.M * p.M, 0);
  for (std::size_t t = 0; t < p.T; ++t)
    for (std::size_t k = 0; k < p.M * p.M; ++k) count[k] += p.bits[t * p.M * p.M + k];
  return count;
}

inline std::vector<std::uint32_t> exposure_count(const FullMask& m) {
  std::vector<std::uint32_t> count(m.H * m.W, 0);
  for (std::size_t t = 0; t < m.T; ++t)
    for (std::size_t k = 0; k < m.H * m.W; ++k) count[k] += m.bits[t * m.H * m.W + k];
  return count;
}

inline std::size_t total_bits(const TilePattern& p) {
  std::size_t n = 0;
  for (auto b : p.bits) n += b;
  return n;
}

// ---------------------------------------------------------------------------
// Baseline generators

inline TilePattern long_exposure(std::size_t T, std::size_t M) {
  if (T == 0 || M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  return TilePattern(T, M, 1);
}

// Slots t with t mod period == offset are fully on.
inline TilePattern short_exposure(std::size_t T, std::size_t M, std::size_t period = 8,
                                  std::size_t offset = 0) {
  if (T == 0 || M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  if (period == 0) throw ValidationError("short exposure period must be >= 1");
  if (offset >= period) throw ValidationError("short exposure offset must be < period");
  TilePattern p(T, M, 0);
  for (std::size_t t = 0; t < T; ++t)
    if (t % period == offset)
      std::fill_n(p.bits.begin() + static_cast<std::ptrdiff_t>(t * M * M), M * M, std::uint8_t{1});
  return p;
}

// Each bit i.i.d. Bernoulli(p); bits drawn in storage order from mt19937_64(seed).
inline TilePattern random_pattern(std::size_t T, std::size_t M, double p, std::uint64_t seed) {
  if (T == 0 || M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("exposure probability outside [0,1]");
  Rng rng(seed);
  TilePattern out(T, M, 0);
  for (auto& b : out.bits) b = uniform01(rng) < p ? 1 : 0;
  out.seed = seed;
  return out;
}

// Exactly one exposed slot per position, chosen uniformly; positions visited
// row-major.
inline TilePattern sparse_random(std::size_t T, std::size_t M, std::uint64_t seed) {
  if (T == 0 || M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  Rng rng(seed);
  TilePattern out(T, M, 0);
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t c = 0; c < M; ++c) out.at(uniform_index(rng, T), r, c) = 1;
  out.seed = seed;
  return out;
}

// ---------------------------------------------------------------------------
// Tile expansion

inline FullMask expand(const TilePattern& tile, std::size_t H, std::size_t W) {
  validate(tile);
  if (H % tile.M != 0 || W % tile.M != 0)
    throw DimensionError("frame " + std::to_string(H) + "x" + std::to_string(W) +
                         " is not divisible by tile size " + std::to_string(tile.M));
  FullMask mask(tile.T, H, W);
  for (std::size_t t = 0; t < tile.T; ++t)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) mask.at(t, i, j) = tile.at(t, i % tile.M, j % tile.M);
  return mask;
}

// Reads back the aligned tile at tile-grid position (tile_row, tile_col).
inline TilePattern restrict_tile(const FullMask& mask, std::size_t M, std::size_t tile_row = 0,
                                 std::size_t tile_col = 0) {
  if (M == 0 || (tile_row + 1) * M > mask.H || (tile_col + 1) * M > mask.W)
    throw DimensionError("tile outside mask");
  TilePattern tile(mask.T, M);
  for (std::size_t t = 0; t < mask.T; ++t)
    for (std::size_t r = 0; r < M; ++r)
      for (std::size_t c = 0; c < M; ++c) tile.at(t, r, c) = mask.at(t, tile_row * M + r, tile_col * M + c);
  return tile;
}

// ---------------------------------------------------------------------------
// Pattern file
//
//   CEPAT v1
//   T=<int> M=<int> seed=<int|none>
//   <M lines of M chars in {0,1}>      (slot 0)
//   <blank line>
//   ...                                (slot T-1)

inline std::string format_pattern(const TilePattern& p) {
  validate(p);
  std::ostringstream out;
  out << "CEPAT v1\n";
  out << "T=" << p.T << " M=" << p.M << " seed=";
  if (p.seed) out << *p.seed; else out << "none";
  out << '\n';
  for (std::size_t t = 0; t < p.T; ++t) {
    if (t > 0) out << '\n';
    for (std::size_t r = 0; r < p.M; ++r) {
      for (std::size_t c = 0; c < p.M; ++c) out << (p.at(t, r, c) ? '1' : '0');
      out << '\n';
    }
  }
  return out.str();
}

namespace detail {

inline std::size_t parse_header_uint(const std::string& token, const std::string& key) {
  const std::string prefix = key + "=";
  if (token.rfind(prefix, 0) != 0) throw ParseError("pattern header: expected '" + prefix + "'");
  const std::string digits = token.substr(prefix.size());
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("pattern header: bad value for " + key);
  return std::stoull(digits);
}

}  // namespace detail

inline TilePattern parse_pattern(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "CEPAT v1") throw ParseError("pattern: bad magic line");
  if (!std::getline(in, line)) throw ParseError("pattern: missing header");
  std::istringstream header(line);
  std::string tT, tM, tSeed, extra;
  if (!(header >> tT >> tM >> tSeed) || (header >> extra)) throw ParseError("pattern: malformed header");
  TilePattern p;
  p.T = detail::parse_header_uint(tT, "T");
  p.M = detail::parse_header_uint(tM, "M");
  if (p.T == 0 || p.M == 0) throw ValidationError("pattern needs T >= 1 and M >= 1");
  if (tSeed == "seed=none") {
    p.seed.reset();
  } else {
    p.seed = detail::parse_header_uint(tSeed, "seed");
  }
  p.bits.assign(p.T * p.M * p.M, 0);
  for (std::size_t t = 0; t < p.T; ++t) {
    if (t > 0) {
      if (!std::getline(in, line)) throw ParseError("pattern: truncated before slot " + std::to_string(t));
      if (!line.empty()) throw ParseError("pattern: expected blank line between slots");
    }
    for (std::size_t r = 0; r < p.M; ++r) {
      if (!std::getline(in, line))
        throw ParseError("pattern: truncated in slot " + std::to_string(t));
      if (line.size() != p.M) throw ParseError("pattern: row width mismatch in slot " + std::to_string(t));
      for (std::size_t c = 0; c < p.M; ++c) {
        const char ch = line[c];
        if (ch == '0' || ch == '1') {
          p.at(t, r, c) = static_cast<std::uint8_t>(ch - '0');
        } else if (ch >= '2' && ch <= '9') {
          throw ValidationError("pattern: bit value '" + std::string(1, ch) + "' outside {0,1}");
        } else {
          throw ParseError("pattern: unexpected character in slot " + std::to_string(t));
        }
      }
    }
  }
  while (std::getline(in, line))
    if (!line.empty()) throw ParseError("pattern: trailing data");
  return p;
}

inline void save_pattern(const TilePattern& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << format_pattern(p);
  if (!out) throw IoError(path.string() + ": write failed");
}

inline TilePattern load_pattern(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pattern(ss.str());
}

}  // namespace snappix

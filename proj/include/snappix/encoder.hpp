#pragma once

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "snappix/common.hpp"
#include "snappix/ingest.hpp"
#include "snappix/patterns.hpp"

namespace snappix {

struct CodedImage {
  std::size_t H = 0;
  std::size_t W = 0;
  std::vector<double> values;
  std::vector<std::uint32_t> counts;
  bool normalized = false;
  // Positions with a zero exposure count seen by normalize().
  std::size_t zero_count_positions = 0;

  CodedImage() = default;
  CodedImage(std::size_t h, std::size_t w) : H(h), W(w), values(h * w, 0.0), counts(h * w, 0) {}

  double value(std::size_t i, std::size_t j) const { return values[i * W + j]; }
  std::uint32_t count(std::size_t i, std::size_t j) const { return counts[i * W + j]; }
};

// X(i,j) = sum_t M(t,i,j) * Y(i,j,t). Rows are independent, so the result does
// not depend on how they are split across threads.
inline CodedImage encode(const VideoClip& clip, const FullMask& mask, Parallelism par = {}) {
  if (clip.T() != mask.T || clip.height() != mask.H || clip.width() != mask.W)
    throw DimensionError("clip and mask disagree on (T,H,W)");
  for (const Frame& f : clip.frames)
    if (f.height != mask.H || f.width != mask.W) throw DimensionError("inconsistent dimensions");
  CodedImage out(mask.H, mask.W);
  parallel_for(mask.H, par, [&](std::size_t i) {
    for (std::size_t j = 0; j < mask.W; ++j) {
      double acc = 0.0;
      std::uint32_t n = 0;
      for (std::size_t t = 0; t < mask.T; ++t) {
        if (mask.at(t, i, j)) {
          acc += clip.frames[t].at(i, j);
          ++n;
        }
      }
      out.values[i * mask.W + j] = acc;
      out.counts[i * mask.W + j] = n;
    }
  });
  return out;
}

inline CodedImage encode(const VideoClip& clip, const TilePattern& pattern, Parallelism par = {}) {
  return encode(clip, expand(pattern, clip.height(), clip.width()), par);
}

// Divides every value by its exposure count; zero-count positions become 0.
inline CodedImage normalize(const CodedImage& coded) {
  if (coded.normalized) throw ValidationError("coded image is already normalized");
  CodedImage out = coded;
  out.normalized = true;
  out.zero_count_positions = 0;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    if (out.counts[k] > 0) {
      out.values[k] /= static_cast<double>(out.counts[k]);
    } else {
      out.values[k] = 0.0;
      ++out.zero_count_positions;
    }
  }
  return out;
}

// Ratio of raw clip bits to coded image bits.
inline double compression_ratio(std::size_t T, std::size_t H, std::size_t W, unsigned bits_raw = 8,
                                unsigned bits_coded = 8) {
  if (bits_raw == 0 || bits_coded == 0) throw ValidationError("bit depth must be positive");
  const double raw = static_cast<double>(T) * H * W * bits_raw;
  const double coded = static_cast<double>(H) * W * bits_coded;
  return raw / coded;
}

inline double compression_ratio(const VideoClip& clip, const CodedImage& coded, unsigned bits_raw = 8,
                                unsigned bits_coded = 8) {
  if (clip.height() != coded.H || clip.width() != coded.W)
    throw DimensionError("clip and coded image disagree on (H,W)");
  return compression_ratio(clip.T(), coded.H, coded.W, bits_raw, bits_coded);
}

inline std::size_t raw_clip_bytes(const VideoClip& clip, unsigned bits = 8) {
  return clip.T() * clip.height() * clip.width() * bits / 8;
}

inline std::size_t coded_image_bytes(const CodedImage& coded, unsigned bits = 8) {
  return coded.H * coded.W * bits / 8;
}

// 8-bit export: value / T (or the normalized value) scaled to [0,255] with
// round-half-to-even.
inline std::vector<std::uint8_t> quantize_coded(const CodedImage& coded, std::size_t T) {
  if (T == 0) throw ValidationError("T must be positive");
  std::vector<std::uint8_t> out(coded.values.size());
  const double denom = coded.normalized ? 1.0 : static_cast<double>(T);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double v = std::clamp(coded.values[k] / denom, 0.0, 1.0) * 255.0;
    out[k] = static_cast<std::uint8_t>(std::nearbyint(v));
  }
  return out;
}

inline void export_coded_pgm(const CodedImage& coded, std::size_t T, const std::filesystem::path& path) {
  const auto q = quantize_coded(coded, T);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << "P5\n" << coded.W << ' ' << coded.H << "\n255\n";
  out.write(reinterpret_cast<const char*>(q.data()), static_cast<std::streamsize>(q.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Binary coded-image file
//
//   "SNPX" | u8 version=1 | u32 H | u32 W | u8 flags (bit0 normalized)
//   | H*W f32 values | H*W u8 counts | u32 CRC32 of everything before it
//
// All multi-byte fields little-endian. Values are stored at float32 precision.

inline constexpr std::uint8_t kCodedVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_coded(const CodedImage& coded) {
  if (coded.values.size() != coded.H * coded.W || coded.counts.size() != coded.H * coded.W)
    throw ValidationError("coded image buffers do not match dimensions");
  if (coded.H > std::numeric_limits<std::uint32_t>::max() || coded.W > std::numeric_limits<std::uint32_t>::max())
    throw ValidationError("coded image too large");
  std::vector<std::uint8_t> buf{'S', 'N', 'P', 'X', kCodedVersion};
  const std::size_t n = coded.H * coded.W;
  buf.reserve(5 + 8 + 1 + 5 * n + 4);
  detail::put_u32(buf, static_cast<std::uint32_t>(coded.H));
  detail::put_u32(buf, static_cast<std::uint32_t>(coded.W));
  buf.push_back(coded.normalized ? 1 : 0);
  for (double v : coded.values) detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (auto c : coded.counts) {
    if (c > 255) throw ValidationError("exposure count exceeds 255; not representable in file");
    buf.push_back(static_cast<std::uint8_t>(c));
  }
  detail::put_u32(buf, detail::crc32_of(buf.data(), buf.size()));
  return buf;
}

inline CodedImage deserialize_coded(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 4 || std::memcmp(buf.data(), "SNPX", 4) != 0) throw ParseError("coded image: bad magic");
  if (buf.size() < 5) throw ParseError("coded image: truncated");
  if (buf[4] != kCodedVersion) throw ParseError("coded image: unsupported version " + std::to_string(buf[4]));
  if (buf.size() < 14) throw ParseError("coded image: truncated");
  CodedImage out;
  out.H = detail::get_u32(&buf[5]);
  out.W = detail::get_u32(&buf[9]);
  const std::uint8_t flags = buf[13];
  if (flags & ~1u) throw ParseError("coded image: unknown flag bits");
  out.normalized = flags & 1u;
  const std::size_t n = out.H * out.W;
  const std::size_t expected = 14 + 4 * n + n + 4;
  if (buf.size() < expected) throw ParseError("coded image: truncated");
  if (buf.size() > expected) throw ParseError("coded image: trailing bytes");
  const std::uint32_t stored = detail::get_u32(&buf[expected - 4]);
  if (stored != detail::crc32_of(buf.data(), expected - 4)) throw ParseError("coded image: checksum mismatch");
  out.values.resize(n);
  out.counts.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    out.values[k] = std::bit_cast<float>(detail::get_u32(&buf[14 + 4 * k]));
  for (std::size_t k = 0; k < n; ++k) out.counts[k] = buf[14 + 4 * n + k];
  return out;
}

inline void write_coded(const CodedImage& coded, const std::filesystem::path& path) {
  const auto buf = serialize_coded(coded);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

inline CodedImage read_coded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_coded(buf);
}

}  // namespace snappix

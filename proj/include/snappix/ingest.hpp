#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "snappix/common.hpp"

namespace snappix {

// One time slice of a clip: row-major luminance.
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), data(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  std::size_t size() const { return data.size(); }
};

struct VideoClip {
  std::vector<Frame> frames;

  std::size_t T() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
};

// Display-referred multi-channel image straight from disk, values in [0,1].
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> data;  // interleaved
};

inline void validate(const Frame& f) {
  if (f.data.size() != f.height * f.width)
    throw ValidationError("frame data length does not match dimensions");
  for (double v : f.data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ValidationError("frame value outside [0,1]");
}

inline void validate(const VideoClip& clip) {
  if (clip.frames.empty()) throw ValidationError("clip has no frames");
  for (const Frame& f : clip.frames) {
    if (f.height != clip.height() || f.width != clip.width())
      throw DimensionError("inconsistent dimensions");
    validate(f);
  }
}

// ---------------------------------------------------------------------------
// Transfer functions

inline double decode_transfer(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("value outside [0,1]");
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double encode_transfer(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline Frame to_linear(const Frame& encoded) {
  Frame out(encoded.height, encoded.width);
  for (std::size_t i = 0; i < encoded.data.size(); ++i)
    out.data[i] = decode_transfer(encoded.data[i]);
  return out;
}

struct LumaWeights {
  double r = 0.299;
  double g = 0.587;
  double b = 0.114;
};

struct IngestOptions {
  bool linearize = true;
  LumaWeights luma{};
};

// Display-referred raw image -> linear-light gray frame. Color conversion
// happens after linearization.
inline Frame to_gray_linear(const RawImage& img, const IngestOptions& opt = {}) {
  Frame out(img.height, img.width);
  const std::size_t n = img.height * img.width;
  auto lin = [&](double v) { return opt.linearize ? decode_transfer(v) : v; };
  if (img.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = lin(img.data[i]);
  } else if (img.channels == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = lin(img.data[3 * i]);
      const double g = lin(img.data[3 * i + 1]);
      const double b = lin(img.data[3 * i + 2]);
      out.data[i] = std::clamp(opt.luma.r * r + opt.luma.g * g + opt.luma.b * b, 0.0, 1.0);
    }
  } else {
    throw ValidationError("unsupported channel count " + std::to_string(img.channels));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats

enum class FrameFormat { Auto, Pgm8, Pgm16, PngGray };

inline FrameFormat parse_frame_format(std::string_view s) {
  if (s == "auto") return FrameFormat::Auto;
  if (s == "pgm8") return FrameFormat::Pgm8;
  if (s == "pgm16") return FrameFormat::Pgm16;
  if (s == "png-gray") return FrameFormat::PngGray;
  throw UsageError("unknown frame format '" + std::string(s) + "'");
}

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_pnm_uint(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  std::size_t v = 0;
  if (!(in >> v)) throw ParseError(path + ": malformed PGM header");
  return v;
}

}  // namespace detail

inline RawImage read_pgm(const std::filesystem::path& path, FrameFormat want = FrameFormat::Auto) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw ParseError(path.string() + ": not a binary PGM (P5)");
  RawImage img;
  img.width = detail::read_pnm_uint(in, path.string());
  img.height = detail::read_pnm_uint(in, path.string());
  const std::size_t maxval = detail::read_pnm_uint(in, path.string());
  in.get();  // single whitespace before raster
  if (maxval == 0 || maxval > 65535)
    throw ValidationError(path.string() + ": unsupported bit depth (maxval " +
                          std::to_string(maxval) + ")");
  const bool wide = maxval > 255;
  if ((want == FrameFormat::Pgm8 && wide) || (want == FrameFormat::Pgm16 && !wide))
    throw ValidationError(path.string() + ": unsupported bit depth for requested format");
  const std::size_t n = img.width * img.height;
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw ParseError(path.string() + ": truncated raster");
  img.data.resize(n);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = wide ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    if (v > maxval) throw ValidationError(path.string() + ": sample exceeds maxval");
    img.data[i] = static_cast<double>(v) * scale;
  }
  return img;
}

inline RawImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError(path.string() + ": cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialisation failed");
  }
  RawImage img;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": malformed PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * img.height);
  rows.resize(img.height);
  for (std::size_t r = 0; r < img.height; ++r) rows[r] = buffer.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  if (img.channels != 1 && img.channels != 3)
    throw ValidationError(path.string() + ": unsupported PNG color type");
  const std::size_t n = img.width * img.height * img.channels;
  img.data.resize(n);
  if (out_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (unsigned(buffer[2 * i]) << 8) | buffer[2 * i + 1];  // network order
      img.data[i] = v / 65535.0;
    }
  } else if (out_depth == 8) {
    for (std::size_t i = 0; i < n; ++i) img.data[i] = buffer[i] / 255.0;
  } else {
    throw ValidationError(path.string() + ": unsupported bit depth");
  }
  return img;
}

inline RawImage read_image(const std::filesystem::path& path, FrameFormat fmt = FrameFormat::Auto) {
  if (fmt == FrameFormat::Auto) {
    const std::string ext = path.extension().string();
    if (ext == ".png" || ext == ".PNG") return read_png(path);
    return read_pgm(path, fmt);
  }
  if (fmt == FrameFormat::PngGray) return read_png(path);
  return read_pgm(path, fmt);
}

inline bool is_frame_file(const std::filesystem::path& p, FrameFormat fmt) {
  const std::string ext = p.extension().string();
  const bool pgm = ext == ".pgm" || ext == ".PGM";
  const bool png = ext == ".png" || ext == ".PNG";
  switch (fmt) {
    case FrameFormat::Auto: return pgm || png;
    case FrameFormat::Pgm8:
    case FrameFormat::Pgm16: return pgm;
    case FrameFormat::PngGray: return png;
  }
  return false;
}

// Frame files of a directory in lexicographic filename order, or the single
// file itself.
inline std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& path,
                                                           FrameFormat fmt = FrameFormat::Auto) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError(path.string() + ": missing path");
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && is_frame_file(entry.path(), fmt)) files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw IoError(path.string() + ": no frames");
  return files;
}

inline VideoClip load_frame_sequence(const std::filesystem::path& path,
                                     FrameFormat fmt = FrameFormat::Auto,
                                     const IngestOptions& opt = {}) {
  VideoClip clip;
  for (const auto& file : list_frame_files(path, fmt)) {
    const RawImage img = read_image(file, fmt);
    if (!clip.frames.empty() &&
        (img.height != clip.height() || img.width != clip.width()))
      throw DimensionError(file.string() + ": inconsistent dimensions");
    clip.frames.push_back(to_gray_linear(img, opt));
  }
  return clip;
}

// Writes a frame as binary PGM. Linear values are display-encoded first unless
// `display_encode` is false.
inline void write_pgm(const Frame& f, const std::filesystem::path& path, int bits = 8,
                      bool display_encode = true) {
  if (bits != 8 && bits != 16) throw ValidationError("PGM export supports 8 or 16 bits");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot write");
  const unsigned maxval = bits == 8 ? 255u : 65535u;
  out << "P5\n" << f.width << ' ' << f.height << '\n' << maxval << '\n';
  for (double v : f.data) {
    const double e = display_encode ? encode_transfer(v) : std::clamp(v, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::nearbyint(e * maxval));
    if (bits == 8) {
      out.put(static_cast<char>(q));
    } else {
      out.put(static_cast<char>(q >> 8));
      out.put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

// Area-average resampling along one axis. Each output cell covers
// [o*s, (o+1)*s) of the input with s = in/out; partial overlaps are weighted.
struct AreaKernel {
  struct Tap {
    std::size_t src;
    double weight;
  };
  std::vector<std::vector<Tap>> taps;

  AreaKernel(std::size_t in, std::size_t out) : taps(out) {
    if (in == out) {
      for (std::size_t o = 0; o < out; ++o) taps[o] = {{o, 1.0}};
      return;
    }
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double lo = o * scale;
      const double hi = (o + 1) * scale;
      const auto first = static_cast<std::size_t>(std::floor(lo));
      const auto last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
      for (std::size_t s = first; s < last; ++s) {
        const double overlap = std::min(hi, double(s + 1)) - std::max(lo, double(s));
        if (overlap > 0.0) taps[o].push_back({s, overlap / scale});
      }
    }
  }
};

}  // namespace detail

inline Frame resample_area(const Frame& in, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("resample to empty frame");
  if (out_h == in.height && out_w == in.width) return in;
  const detail::AreaKernel kh(in.height, out_h);
  const detail::AreaKernel kw(in.width, out_w);
  Frame tmp(in.height, out_w);
  for (std::size_t r = 0; r < in.height; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (const auto& tap : kw.taps[c]) acc += tap.weight * in.at(r, tap.src);
      tmp.at(r, c) = acc;
    }
  Frame out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double acc = 0.0;
      for (const auto& tap : kh.taps[r]) acc += tap.weight * tmp.at(tap.src, c);
      out.at(r, c) = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

// Centered crop; on odd margins the extra pixel is dropped on the right/bottom.
inline Frame center_crop(const Frame& in, std::size_t crop_h, std::size_t crop_w) {
  if (crop_h > in.height || crop_w > in.width)
    throw DimensionError("input smaller than crop");
  const std::size_t top = (in.height - crop_h) / 2;
  const std::size_t left = (in.width - crop_w) / 2;
  Frame out(crop_h, crop_w);
  for (std::size_t r = 0; r < crop_h; ++r)
    for (std::size_t c = 0; c < crop_w; ++c) out.at(r, c) = in.at(top + r, left + c);
  return out;
}

struct PreprocessOptions {
  std::size_t short_side = 112;
  std::size_t crop = 112;
};

inline Frame preprocess(const Frame& in, const PreprocessOptions& opt = {}) {
  const std::size_t shorter = std::min(in.height, in.width);
  if (shorter < opt.short_side || shorter < opt.crop)
    throw DimensionError("input smaller than crop");
  // Long side is rounded to the nearest pixel after scaling.
  auto scaled = [&](std::size_t dim) {
    if (dim == shorter) return opt.short_side;
    return static_cast<std::size_t>(std::llround(
        static_cast<double>(dim) * static_cast<double>(opt.short_side) / static_cast<double>(shorter)));
  };
  const Frame resized = resample_area(in, scaled(in.height), scaled(in.width));
  if (resized.height < opt.crop || resized.width < opt.crop)
    throw DimensionError("input smaller than crop");
  return center_crop(resized, opt.crop, opt.crop);
}

inline VideoClip preprocess(const VideoClip& clip, const PreprocessOptions& opt = {}) {
  VideoClip out;
  out.frames.reserve(clip.T());
  for (const Frame& f : clip.frames) out.frames.push_back(preprocess(f, opt));
  return out;
}

// Windows [k*stride, k*stride + T) over a frame stream.
inline std::vector<VideoClip> window_clips(const std::vector<Frame>& frames, std::size_t T,
                                           std::size_t stride) {
  if (T == 0 || stride == 0) throw ValidationError("window length and stride must be positive");
  std::vector<VideoClip> clips;
  for (std::size_t start = 0; start + T <= frames.size(); start += stride) {
    VideoClip c;
    c.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(start),
                    frames.begin() + static_cast<std::ptrdiff_t>(start + T));
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace snappix

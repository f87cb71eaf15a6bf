#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "snappix/common.hpp"
#include "snappix/ingest.hpp"

namespace snappix {

// Seeded stand-in for natural video: a translating periodic intensity
// gradient overlaid with moving Gaussian blobs. Values are linear-light in [0,1].
struct SyntheticCorpusConfig {
  std::size_t clips = 500;
  std::size_t T = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 0;
  double gradient_period_min = 16.0;  // pixels
  double gradient_period_max = 48.0;
  double gradient_amplitude = 0.3;
  double speed_min = 1.0;  // pixels per frame
  double speed_max = 3.0;
  std::size_t blobs_min = 2;
  std::size_t blobs_max = 6;
  double blob_radius_min = 3.0;
  double blob_radius_max = 8.0;
  double blob_amplitude = 0.4;
};

namespace detail {

inline double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Triangle wave with unit period, range [0,1].
inline double triangle(double phase) {
  const double f = phase - std::floor(phase);
  return f < 0.5 ? 2.0 * f : 2.0 - 2.0 * f;
}

}  // namespace detail

inline VideoClip synthetic_clip(const SyntheticCorpusConfig& cfg, Rng& rng) {
  using detail::uniform_in;
  const double two_pi = 2.0 * std::numbers::pi;

  const double base = uniform_in(rng, 0.3, 0.5);
  const double angle = uniform_in(rng, 0.0, two_pi);
  const double period = uniform_in(rng, cfg.gradient_period_min, cfg.gradient_period_max);
  const double phase0 = uniform01(rng);
  const double g_speed = uniform_in(rng, cfg.speed_min, cfg.speed_max);
  const double ux = std::cos(angle);
  const double uy = std::sin(angle);

  struct Blob {
    double x, y, vx, vy, radius, amplitude;
  };
  const std::size_t n_blobs =
      cfg.blobs_min + static_cast<std::size_t>(uniform_index(rng, cfg.blobs_max - cfg.blobs_min + 1));
  std::vector<Blob> blobs(n_blobs);
  for (auto& b : blobs) {
    const double dir = uniform_in(rng, 0.0, two_pi);
    const double speed = uniform_in(rng, cfg.speed_min, cfg.speed_max);
    b.x = uniform_in(rng, 0.0, static_cast<double>(cfg.width));
    b.y = uniform_in(rng, 0.0, static_cast<double>(cfg.height));
    b.vx = speed * std::cos(dir);
    b.vy = speed * std::sin(dir);
    b.radius = uniform_in(rng, cfg.blob_radius_min, cfg.blob_radius_max);
    b.amplitude = uniform_in(rng, -cfg.blob_amplitude, cfg.blob_amplitude);
  }

  VideoClip clip;
  clip.frames.reserve(cfg.T);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    Frame f(cfg.height, cfg.width);
    const double shift = g_speed * static_cast<double>(t);
    for (std::size_t r = 0; r < cfg.height; ++r)
      for (std::size_t c = 0; c < cfg.width; ++c) {
        const double along = (ux * c + uy * r - shift) / period + phase0;
        double v = base + cfg.gradient_amplitude * detail::triangle(along);
        for (const auto& b : blobs) {
          const double dx = static_cast<double>(c) - (b.x + b.vx * t);
          const double dy = static_cast<double>(r) - (b.y + b.vy * t);
          v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
        }
        f.at(r, c) = std::clamp(v, 0.0, 1.0);
      }
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

inline std::vector<VideoClip> synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.T == 0 || cfg.height == 0 || cfg.width == 0) throw ValidationError("synthetic corpus needs T, H, W >= 1");
  if (cfg.blobs_max < cfg.blobs_min) throw ValidationError("blobs_max < blobs_min");
  Rng rng(derive_seed(cfg.seed, "synthetic/corpus"));
  std::vector<VideoClip> out;
  out.reserve(cfg.clips);
  for (std::size_t i = 0; i < cfg.clips; ++i) out.push_back(synthetic_clip(cfg, rng));
  return out;
}

}  // namespace snappix

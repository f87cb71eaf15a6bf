#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond the plain data types.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "snappix/ingest.hpp"
#include "snappix/patterns.hpp"

namespace oracle {

using snappix::TilePattern;
using snappix::VideoClip;

// X(i,j) = sum_t M(t, i mod M, j mod M) * Y(t,i,j), straight triple loop.
inline std::vector<double> coded(const VideoClip& clip, const TilePattern& p) {
  const std::size_t H = clip.frames[0].height, W = clip.frames[0].width;
  std::vector<double> x(H * W, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < p.T; ++t)
        if (p.bits[(t * p.M + i % p.M) * p.M + j % p.M]) acc += clip.frames[t].data[i * W + j];
      x[i * W + j] = acc;
    }
  return x;
}

inline std::vector<std::uint32_t> counts(const TilePattern& p, std::size_t H, std::size_t W) {
  std::vector<std::uint32_t> n(H * W, 0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t t = 0; t < p.T; ++t) n[i * W + j] += p.bits[(t * p.M + i % p.M) * p.M + j % p.M];
  return n;
}

// Textbook Pearson over rows of `rows` (P x S), with the library's epsilon
// and degenerate-row convention; live rows have a unit diagonal.
inline std::vector<double> pearson(const std::vector<std::vector<double>>& rows) {
  const std::size_t P = rows.size(), S = rows[0].size();
  std::vector<double> mean(P, 0.0), sd(P, 0.0);
  for (std::size_t i = 0; i < P; ++i) {
    for (double v : rows[i]) mean[i] += v;
    mean[i] /= S;
    for (double v : rows[i]) sd[i] += (v - mean[i]) * (v - mean[i]);
    sd[i] = std::sqrt(sd[i] / S);
  }
  std::vector<double> C(P * P, 0.0);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < P; ++j) {
      if (sd[i] < 1e-10 || sd[j] < 1e-10) continue;
      if (i == j) {
        C[i * P + i] = 1.0;
        continue;
      }
      double cov = 0.0;
      for (std::size_t k = 0; k < S; ++k) cov += (rows[i][k] - mean[i]) * (rows[j][k] - mean[j]);
      C[i * P + j] = (cov / S) / (sd[i] * sd[j] + 1e-8);
    }
  return C;
}

inline double l_cor(const std::vector<double>& C, std::size_t P) {
  double acc = 0.0;
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < P; ++j)
      if (i != j) acc += C[i * P + j] * C[i * P + j];
  return acc / (P * (P - 1.0));
}

enum class Centering { None, PerCell, PerSample };

// Loss of a real-valued tile mask m[(t*M+r)*M+c] on `batch`. Tiles become
// samples in image-major, grid row-major order. For PerCell, `cell_means`
// holds one fixed scalar per grid cell.
inline double loss_of_mask(const std::vector<double>& m, std::size_t T, std::size_t M,
                           const std::vector<VideoClip>& batch, bool normalize, Centering centering,
                           const std::vector<double>& cell_means = {}) {
  const std::size_t H = batch[0].frames[0].height, W = batch[0].frames[0].width;
  const std::size_t P = M * M, nr = H / M, nc = W / M;
  std::vector<std::vector<double>> rows(P);
  for (const auto& clip : batch)
    for (std::size_t gr = 0; gr < nr; ++gr)
      for (std::size_t gc = 0; gc < nc; ++gc) {
        std::vector<double> z(P);
        for (std::size_t r = 0; r < M; ++r)
          for (std::size_t c = 0; c < M; ++c) {
            double x = 0.0, n = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
              const double w = m[(t * M + r) * M + c];
              x += w * clip.frames[t].data[(gr * M + r) * W + gc * M + c];
              n += w;
            }
            z[r * M + c] = normalize ? (n > 0.0 ? x / n : 0.0) : x;
          }
        double mu = 0.0;
        if (centering == Centering::PerCell) mu = cell_means[gr * nc + gc];
        if (centering == Centering::PerSample) {
          for (double v : z) mu += v;
          mu /= P;
        }
        for (std::size_t p = 0; p < P; ++p) rows[p].push_back(z[p] - mu);
      }
  return l_cor(pearson(rows), P);
}

// Per-cell means of the coded (optionally normalized) values of a binary
// pattern over the batch.
inline std::vector<double> cell_means(const TilePattern& p, const std::vector<VideoClip>& batch, bool normalize) {
  const std::size_t H = batch[0].frames[0].height, W = batch[0].frames[0].width;
  const std::size_t nr = H / p.M, nc = W / p.M;
  std::vector<double> sum(nr * nc, 0.0);
  std::vector<double> cnt(nr * nc, 0.0);
  const auto n = counts(p, H, W);
  for (const auto& clip : batch) {
    const auto x = coded(clip, p);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double v = normalize ? (n[i * W + j] ? x[i * W + j] / n[i * W + j] : 0.0) : x[i * W + j];
        sum[(i / p.M) * nc + j / p.M] += v;
        cnt[(i / p.M) * nc + j / p.M] += 1.0;
      }
  }
  for (std::size_t c = 0; c < sum.size(); ++c) sum[c] /= cnt[c];
  return sum;
}

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Central differences of the straight-through surrogate
// mask(theta') = hard(theta0) + sigmoid(theta') - sigmoid(theta0).
template <typename LossFn>
std::vector<double> ste_fd_gradient(const std::vector<double>& theta0, LossFn&& loss, double h = 1e-4) {
  std::vector<double> hard(theta0.size()), base(theta0.size());
  for (std::size_t i = 0; i < theta0.size(); ++i) {
    hard[i] = theta0[i] >= 0.0 ? 1.0 : 0.0;
    base[i] = sig(theta0[i]);
  }
  std::vector<double> g(theta0.size());
  for (std::size_t i = 0; i < theta0.size(); ++i) {
    std::vector<double> mp = hard, mm = hard;
    mp[i] += sig(theta0[i] + h) - base[i];
    mm[i] += sig(theta0[i] - h) - base[i];
    g[i] = (loss(mp) - loss(mm)) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den > 0.0 ? std::sqrt(d) / den : std::sqrt(d);
}

// Plain random fixtures. std::mt19937_64 with std distributions, independent
// of the library's RNG mappings.
inline VideoClip random_clip(std::mt19937_64& g, std::size_t T, std::size_t H, std::size_t W) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VideoClip clip;
  for (std::size_t t = 0; t < T; ++t) {
    snappix::Frame f(H, W);
    for (auto& v : f.data) v = u(g);
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

inline TilePattern random_tile(std::mt19937_64& g, std::size_t T, std::size_t M, double p) {
  std::bernoulli_distribution b(p);
  TilePattern tp(T, M);
  for (auto& bit : tp.bits) bit = b(g) ? 1 : 0;
  return tp;
}

}  // namespace oracle

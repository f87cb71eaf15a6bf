#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "snappix/common.hpp"
#include "snappix/encoder.hpp"

namespace snappix {

// P x S matrix: row p is coded pixel p of the tile (row-major within the
// tile), column k is one tile. Columns are ordered image-major, then tile-grid
// row-major, so column k sits at grid cell k % tiles_per_image.
struct SampleMatrix {
  std::size_t P = 0;
  std::size_t S = 0;
  std::size_t tiles_per_image = 0;
  std::vector<double> data;  // index p*S + k

  double& at(std::size_t p, std::size_t k) { return data[p * S + k]; }
  double at(std::size_t p, std::size_t k) const { return data[p * S + k]; }
  std::span<const double> row(std::size_t p) const { return {data.data() + p * S, S}; }
  std::size_t images() const { return tiles_per_image ? S / tiles_per_image : 0; }
};

struct CorrelationMatrix {
  std::size_t P = 0;
  std::vector<double> data;          // P x P row-major
  std::vector<std::uint8_t> degenerate;  // per row: variance below the floor

  double at(std::size_t i, std::size_t j) const { return data[i * P + j]; }
};

// How samples are centered before correlation.
enum class ContrastMode {
  DatasetPerCell,  // one dataset-level scalar per tile-grid cell (default)
  DatasetGlobal,   // one dataset-level scalar for all cells
  PerSample,       // each tile minus its own mean
  None,
};

inline ContrastMode parse_contrast_mode(std::string_view s) {
  if (s == "dataset") return ContrastMode::DatasetPerCell;
  if (s == "global") return ContrastMode::DatasetGlobal;
  if (s == "per-sample") return ContrastMode::PerSample;
  if (s == "none") return ContrastMode::None;
  throw UsageError("unknown contrast mode '" + std::string(s) + "'");
}

inline std::string_view to_string(ContrastMode m) {
  switch (m) {
    case ContrastMode::DatasetPerCell: return "dataset";
    case ContrastMode::DatasetGlobal: return "global";
    case ContrastMode::PerSample: return "per-sample";
    case ContrastMode::None: return "none";
  }
  return "?";
}

inline constexpr double kPearsonEpsilon = 1e-8;
inline constexpr double kSigmaFloor = 1e-10;

// ---------------------------------------------------------------------------
// Tile collection

inline SampleMatrix collect_tiles(std::span<const CodedImage> batch, std::size_t M) {
  if (batch.empty()) throw ValidationError("empty batch");
  if (M == 0) throw ValidationError("tile size must be positive");
  const std::size_t H = batch.front().H;
  const std::size_t W = batch.front().W;
  if (H % M != 0 || W % M != 0) throw DimensionError("coded image not divisible by tile size");
  for (const auto& img : batch)
    if (img.H != H || img.W != W) throw DimensionError("coded images in batch differ in size");
  const std::size_t nr = H / M;
  const std::size_t nc = W / M;
  SampleMatrix s;
  s.P = M * M;
  s.tiles_per_image = nr * nc;
  s.S = batch.size() * s.tiles_per_image;
  s.data.assign(s.P * s.S, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t gr = 0; gr < nr; ++gr)
      for (std::size_t gc = 0; gc < nc; ++gc) {
        const std::size_t k = b * s.tiles_per_image + gr * nc + gc;
        for (std::size_t r = 0; r < M; ++r)
          for (std::size_t c = 0; c < M; ++c) s.at(r * M + c, k) = batch[b].value(gr * M + r, gc * M + c);
      }
  return s;
}

// ---------------------------------------------------------------------------
// Zero-mean contrast encoding

// Running sums per tile-grid cell (or one global cell); merge() combines
// partial fits, mean() finalizes.
struct TileMeanTable {
  std::size_t P = 0;
  std::size_t cells = 0;  // tiles_per_image, or 1 when global
  std::vector<double> sums;
  std::vector<std::size_t> counts;

  double mean(std::size_t cell) const {
    return counts[cell] ? sums[cell] / static_cast<double>(counts[cell]) : 0.0;
  }
  std::size_t sample_count() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  bool global() const { return cells == 1; }

  void merge(const TileMeanTable& other) {
    if (other.P != P || other.cells != cells) throw DimensionError("tile mean tables have different geometry");
    for (std::size_t c = 0; c < cells; ++c) {
      sums[c] += other.sums[c];
      counts[c] += other.counts[c];
    }
  }

  static TileMeanTable zeros(std::size_t P, std::size_t cells) {
    return {P, cells, std::vector<double>(cells, 0.0), std::vector<std::size_t>(cells, 0)};
  }
};

inline TileMeanTable fit_tile_means(const SampleMatrix& s, bool global = false) {
  if (s.S == 0 || s.P == 0 || s.tiles_per_image == 0) throw ValidationError("empty batch");
  TileMeanTable t = TileMeanTable::zeros(s.P, global ? 1 : s.tiles_per_image);
  for (std::size_t p = 0; p < s.P; ++p)
    for (std::size_t k = 0; k < s.S; ++k) {
      const std::size_t cell = global ? 0 : k % s.tiles_per_image;
      t.sums[cell] += s.at(p, k);
      ++t.counts[cell];
    }
  return t;
}

inline SampleMatrix contrast_encode(const SampleMatrix& s, const TileMeanTable& means) {
  if (means.P != s.P || (means.cells != 1 && means.cells != s.tiles_per_image))
    throw DimensionError("tile means fitted on incompatible geometry");
  SampleMatrix out = s;
  for (std::size_t k = 0; k < s.S; ++k) {
    const double mu = means.mean(means.global() ? 0 : k % s.tiles_per_image);
    for (std::size_t p = 0; p < s.P; ++p) out.at(p, k) -= mu;
  }
  return out;
}

// Alternative reading of the zero-mean step: every tile sample minus its own mean.
inline SampleMatrix contrast_encode_per_sample(const SampleMatrix& s) {
  SampleMatrix out = s;
  for (std::size_t k = 0; k < s.S; ++k) {
    double mu = 0.0;
    for (std::size_t p = 0; p < s.P; ++p) mu += s.at(p, k);
    mu /= static_cast<double>(s.P);
    for (std::size_t p = 0; p < s.P; ++p) out.at(p, k) -= mu;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pearson correlation

namespace detail {

inline CorrelationMatrix correlation_from_moments(std::size_t P, const std::vector<double>& cov) {
  CorrelationMatrix C;
  C.P = P;
  C.data.assign(P * P, 0.0);
  C.degenerate.assign(P, 0);
  std::vector<double> sigma(P);
  for (std::size_t i = 0; i < P; ++i) {
    sigma[i] = std::sqrt(std::max(0.0, cov[i * P + i]));
    C.degenerate[i] = sigma[i] < kSigmaFloor;
  }
  for (std::size_t i = 0; i < P; ++i) {
    if (C.degenerate[i]) continue;
    C.data[i * P + i] = 1.0;
    for (std::size_t j = i + 1; j < P; ++j) {
      if (C.degenerate[j]) continue;
      const double c = cov[i * P + j] / (sigma[i] * sigma[j] + kPearsonEpsilon);
      C.data[i * P + j] = c;
      C.data[j * P + i] = c;
    }
  }
  return C;
}

}  // namespace detail

// C_ij = cov_ij / (sigma_i sigma_j + eps) with population moments from a
// two-pass (mean, then deviations) sweep. Degenerate rows correlate 0 with
// everything, including themselves.
inline CorrelationMatrix pearson(const SampleMatrix& s) {
  if (s.S < 2) throw ValidationError("pearson needs at least 2 samples");
  const std::size_t P = s.P;
  std::vector<double> dev(s.data.size());
  for (std::size_t p = 0; p < P; ++p) {
    double mu = 0.0;
    for (std::size_t k = 0; k < s.S; ++k) mu += s.at(p, k);
    mu /= static_cast<double>(s.S);
    for (std::size_t k = 0; k < s.S; ++k) dev[p * s.S + k] = s.at(p, k) - mu;
  }
  std::vector<double> cov(P * P, 0.0);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = i; j < P; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.S; ++k) acc += dev[i * s.S + k] * dev[j * s.S + k];
      cov[i * P + j] = cov[j * P + i] = acc / static_cast<double>(s.S);
    }
  return detail::correlation_from_moments(P, cov);
}

// Streaming co-moment accumulator. Chunks are combined with the pairwise
// update of Chan, Golub and LeVeque, so any chunking of the same samples
// agrees with pearson() to rounding.
class CorrelationAccumulator {
 public:
  explicit CorrelationAccumulator(std::size_t P) : P_(P), mean_(P, 0.0), comoment_(P * P, 0.0) {}

  std::size_t P() const { return P_; }
  std::size_t count() const { return n_; }

  void add(const SampleMatrix& s) {
    if (s.P != P_) throw DimensionError("sample matrix has wrong tile size");
    if (s.S == 0) return;
    CorrelationAccumulator chunk(P_);
    chunk.n_ = s.S;
    std::vector<double> dev(s.data.size());
    for (std::size_t p = 0; p < P_; ++p) {
      double mu = 0.0;
      for (std::size_t k = 0; k < s.S; ++k) mu += s.at(p, k);
      mu /= static_cast<double>(s.S);
      chunk.mean_[p] = mu;
      for (std::size_t k = 0; k < s.S; ++k) dev[p * s.S + k] = s.at(p, k) - mu;
    }
    for (std::size_t i = 0; i < P_; ++i)
      for (std::size_t j = i; j < P_; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < s.S; ++k) acc += dev[i * s.S + k] * dev[j * s.S + k];
        chunk.comoment_[i * P_ + j] = chunk.comoment_[j * P_ + i] = acc;
      }
    merge(chunk);
  }

  void merge(const CorrelationAccumulator& o) {
    if (o.P_ != P_) throw DimensionError("accumulators have different tile size");
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(o.n_);
    const double n = na + nb;
    std::vector<double> delta(P_);
    for (std::size_t p = 0; p < P_; ++p) delta[p] = o.mean_[p] - mean_[p];
    for (std::size_t i = 0; i < P_; ++i)
      for (std::size_t j = 0; j < P_; ++j)
        comoment_[i * P_ + j] += o.comoment_[i * P_ + j] + delta[i] * delta[j] * na * nb / n;
    for (std::size_t p = 0; p < P_; ++p) mean_[p] += delta[p] * nb / n;
    n_ += o.n_;
  }

  CorrelationMatrix correlation() const {
    if (n_ < 2) throw ValidationError("pearson needs at least 2 samples");
    std::vector<double> cov(comoment_);
    for (auto& v : cov) v /= static_cast<double>(n_);
    return detail::correlation_from_moments(P_, cov);
  }

 private:
  std::size_t P_;
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> comoment_;
};

// ---------------------------------------------------------------------------
// Loss

// Mean squared off-diagonal correlation.
inline double decorrelation_loss(const CorrelationMatrix& C) {
  if (C.P < 2) throw ValidationError("decorrelation loss needs P >= 2");
  double acc = 0.0;
  for (std::size_t i = 0; i < C.P; ++i)
    for (std::size_t j = 0; j < C.P; ++j)
      if (i != j) acc += C.at(i, j) * C.at(i, j);
  return acc / static_cast<double>(C.P * (C.P - 1));
}

inline double mean_abs_correlation(const CorrelationMatrix& C) {
  if (C.P < 2) throw ValidationError("need P >= 2");
  double acc = 0.0;
  for (std::size_t i = 0; i < C.P; ++i)
    for (std::size_t j = 0; j < C.P; ++j)
      if (i != j) acc += std::abs(C.at(i, j));
  return acc / static_cast<double>(C.P * (C.P - 1));
}

inline bool all_degenerate(const CorrelationMatrix& C) {
  for (auto d : C.degenerate)
    if (!d) return false;
  return true;
}

}  // namespace snappix

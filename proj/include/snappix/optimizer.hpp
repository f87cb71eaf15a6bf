#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <numeric>
#include <span>
#include <vector>

#include "snappix/common.hpp"
#include "snappix/encoder.hpp"
#include "snappix/ingest.hpp"
#include "snappix/patterns.hpp"
#include "snappix/stats.hpp"

namespace snappix {

// Real-valued logits behind a tile pattern; same (t, r, c) layout as TilePattern.
struct MaskLogits {
  std::size_t T = 0;
  std::size_t M = 0;
  std::vector<double> theta;

  MaskLogits() = default;
  MaskLogits(std::size_t t, std::size_t m, double fill = 0.0) : T(t), M(m), theta(t * m * m, fill) {}
};

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

// Hard threshold; theta == 0 maps to 1.
inline TilePattern binarize_ste_forward(const MaskLogits& logits) {
  TilePattern p(logits.T, logits.M);
  for (std::size_t k = 0; k < logits.theta.size(); ++k) p.bits[k] = logits.theta[k] >= 0.0 ? 1 : 0;
  return p;
}

// Settings shared by the loss, the evaluator and the trainer.
struct LossOptions {
  bool normalize = true;
  ContrastMode contrast = ContrastMode::DatasetPerCell;
  Parallelism par{};
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d theta, T*M*M
  SampleMatrix raw;          // coded samples before contrast encoding
};

namespace detail {

inline void check_batch_geometry(std::span<const VideoClip> batch, std::size_t T, std::size_t M) {
  if (batch.empty()) throw ValidationError("empty batch");
  const std::size_t H = batch.front().height();
  const std::size_t W = batch.front().width();
  if (H == 0 || W == 0 || H % M != 0 || W % M != 0)
    throw DimensionError("batch geometry not divisible by tile size");
  for (const auto& clip : batch) {
    if (clip.T() != T) throw DimensionError("clip length does not match pattern T");
    if (clip.height() != H || clip.width() != W) throw DimensionError("clips in batch differ in size");
  }
}

// Tile-sample matrix of the coded batch for a real-valued tile mask
// (T*M*M, layout (t, r, c)). Hard masks reproduce encode() + normalize().
inline SampleMatrix coded_samples(std::span<const double> mask, std::size_t T, std::size_t M,
                                  std::span<const VideoClip> batch, bool normalize, Parallelism par,
                                  std::vector<double>* counts_out = nullptr) {
  const std::size_t P = M * M;
  const std::size_t H = batch.front().height();
  const std::size_t W = batch.front().width();
  const std::size_t nc = W / M;
  SampleMatrix s;
  s.P = P;
  s.tiles_per_image = (H / M) * nc;
  s.S = batch.size() * s.tiles_per_image;
  s.data.assign(P * s.S, 0.0);
  std::vector<double> counts(P, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p) counts[p] += mask[t * P + p];
  parallel_for(batch.size(), par, [&](std::size_t b) {
    const VideoClip& clip = batch[b];
    for (std::size_t g = 0; g < s.tiles_per_image; ++g) {
      const std::size_t k = b * s.tiles_per_image + g;
      const std::size_t row0 = (g / nc) * M;
      const std::size_t col0 = (g % nc) * M;
      for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < M; ++c) {
          const std::size_t p = r * M + c;
          double x = 0.0;
          for (std::size_t t = 0; t < T; ++t) x += mask[t * P + p] * clip.frames[t].at(row0 + r, col0 + c);
          if (normalize) x = counts[p] > 0.0 ? x / counts[p] : 0.0;
          s.at(p, k) = x;
        }
    }
  });
  if (counts_out) *counts_out = std::move(counts);
  return s;
}

inline SampleMatrix apply_contrast(const SampleMatrix& raw, ContrastMode mode, const TileMeanTable* means) {
  switch (mode) {
    case ContrastMode::DatasetPerCell:
    case ContrastMode::DatasetGlobal:
      if (!means) throw ValidationError("dataset contrast mode needs a tile mean table");
      return contrast_encode(raw, *means);
    case ContrastMode::PerSample: return contrast_encode_per_sample(raw);
    case ContrastMode::None: return raw;
  }
  return raw;
}

// d L_Cor / d samples for a centered-or-not sample matrix `s`. Returns the loss.
inline double loss_backward(const SampleMatrix& s, std::vector<double>& grad_s) {
  const std::size_t P = s.P;
  const std::size_t S = s.S;
  if (S < 2) throw ValidationError("pearson needs at least 2 samples");
  if (P < 2) throw ValidationError("decorrelation loss needs P >= 2");
  std::vector<double> dev(P * S);
  for (std::size_t p = 0; p < P; ++p) {
    double mu = 0.0;
    for (std::size_t k = 0; k < S; ++k) mu += s.at(p, k);
    mu /= static_cast<double>(S);
    for (std::size_t k = 0; k < S; ++k) dev[p * S + k] = s.at(p, k) - mu;
  }
  std::vector<double> sigma(P);
  std::vector<std::uint8_t> dead(P);
  for (std::size_t p = 0; p < P; ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < S; ++k) acc += dev[p * S + k] * dev[p * S + k];
    sigma[p] = std::sqrt(acc / static_cast<double>(S));
    dead[p] = sigma[p] < kSigmaFloor;
  }
  if (std::all_of(dead.begin(), dead.end(), [](auto d) { return d != 0; })) throw DegenerateStatistics();

  // a_ij = C_ij / D_ij; b_i = sum_j C_ij^2 sigma_j / D_ij
  std::vector<double> a(P * P, 0.0);
  std::vector<double> b(P, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < P; ++i) {
    if (dead[i]) continue;
    for (std::size_t j = i + 1; j < P; ++j) {
      if (dead[j]) continue;
      double cov = 0.0;
      for (std::size_t k = 0; k < S; ++k) cov += dev[i * S + k] * dev[j * S + k];
      cov /= static_cast<double>(S);
      const double D = sigma[i] * sigma[j] + kPearsonEpsilon;
      const double C = cov / D;
      loss += 2.0 * C * C;
      a[i * P + j] = a[j * P + i] = C / D;
      b[i] += C * C * sigma[j] / D;
      b[j] += C * C * sigma[i] / D;
    }
  }
  const double norm = 1.0 / static_cast<double>(P * (P - 1));
  loss *= norm;

  grad_s.assign(P * S, 0.0);
  const double scale = 4.0 * norm / static_cast<double>(S);
  for (std::size_t i = 0; i < P; ++i) {
    if (dead[i]) continue;
    double* gi = grad_s.data() + i * S;
    for (std::size_t j = 0; j < P; ++j) {
      const double aij = a[i * P + j];
      if (aij == 0.0) continue;
      const double* dj = dev.data() + j * S;
      for (std::size_t k = 0; k < S; ++k) gi[k] += aij * dj[k];
    }
    const double self = b[i] / sigma[i];
    const double* di = dev.data() + i * S;
    for (std::size_t k = 0; k < S; ++k) gi[k] = scale * (gi[k] - self * di[k]);
    // Row centering: subtract the row mean of the gradient.
    double mean = 0.0;
    for (std::size_t k = 0; k < S; ++k) mean += gi[k];
    mean /= static_cast<double>(S);
    for (std::size_t k = 0; k < S; ++k) gi[k] -= mean;
  }
  return loss;
}

// Loss and d loss / d mask for a real-valued tile mask.
inline double loss_and_mask_grad(std::span<const double> mask, std::size_t T, std::size_t M,
                                 std::span<const VideoClip> batch, const TileMeanTable* means,
                                 const LossOptions& opt, std::vector<double>& grad_mask, SampleMatrix* raw_out) {
  const std::size_t P = M * M;
  std::vector<double> counts;
  SampleMatrix raw = coded_samples(mask, T, M, batch, opt.normalize, opt.par, &counts);
  const SampleMatrix s = apply_contrast(raw, opt.contrast, means);
  std::vector<double> g;
  const double loss = loss_backward(s, g);

  // Through per-sample contrast: s_pk = z_pk - mean_q z_qk.
  if (opt.contrast == ContrastMode::PerSample) {
    for (std::size_t k = 0; k < s.S; ++k) {
      double mean = 0.0;
      for (std::size_t p = 0; p < P; ++p) mean += g[p * s.S + k];
      mean /= static_cast<double>(P);
      for (std::size_t p = 0; p < P; ++p) g[p * s.S + k] -= mean;
    }
  }

  // Through the coding: z = x / n with x = sum_t m_t Y_t and n = sum_t m_t,
  // so dz/dm_t = (Y_t - z) / n; without normalization dz/dm_t = Y_t.
  const std::size_t H = batch.front().height();
  const std::size_t W = batch.front().width();
  const std::size_t nc = W / M;
  const std::size_t tiles = (H / M) * nc;
  std::vector<std::vector<double>> partial(batch.size(), std::vector<double>(T * P, 0.0));
  parallel_for(batch.size(), opt.par, [&](std::size_t b) {
    auto& acc = partial[b];
    const VideoClip& clip = batch[b];
    for (std::size_t gcell = 0; gcell < tiles; ++gcell) {
      const std::size_t k = b * tiles + gcell;
      const std::size_t row0 = (gcell / nc) * M;
      const std::size_t col0 = (gcell % nc) * M;
      for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < M; ++c) {
          const std::size_t p = r * M + c;
          const double gz = g[p * s.S + k];
          if (gz == 0.0) continue;
          if (opt.normalize) {
            if (!(counts[p] > 0.0)) continue;
            const double z = raw.at(p, k);
            const double inv = 1.0 / counts[p];
            for (std::size_t t = 0; t < T; ++t)
              acc[t * P + p] += gz * (clip.frames[t].at(row0 + r, col0 + c) - z) * inv;
          } else {
            for (std::size_t t = 0; t < T; ++t) acc[t * P + p] += gz * clip.frames[t].at(row0 + r, col0 + c);
          }
        }
    }
  });
  grad_mask.assign(T * P, 0.0);
  for (const auto& part : partial)
    for (std::size_t i = 0; i < T * P; ++i) grad_mask[i] += part[i];
  if (raw_out) *raw_out = std::move(raw);
  return loss;
}

}  // namespace detail

// Decorrelation loss of the binarized mask on `batch`, and its
// straight-through gradient: the backward pass treats d bit / d theta as
// sigmoid'(theta).
inline LossAndGrad loss_and_grad(const MaskLogits& logits, std::span<const VideoClip> batch,
                                 const TileMeanTable* means, const LossOptions& opt = {}) {
  if (logits.T == 0 || logits.M == 0) throw ValidationError("logits need T >= 1 and M >= 1");
  detail::check_batch_geometry(batch, logits.T, logits.M);
  const TilePattern hard = binarize_ste_forward(logits);
  const std::vector<double> mask(hard.bits.begin(), hard.bits.end());
  LossAndGrad out;
  std::vector<double> grad_mask;
  out.loss = detail::loss_and_mask_grad(mask, logits.T, logits.M, batch, means, opt, grad_mask, &out.raw);
  out.grad.resize(grad_mask.size());
  for (std::size_t i = 0; i < grad_mask.size(); ++i) out.grad[i] = grad_mask[i] * sigmoid_derivative(logits.theta[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PatternEvaluation {
  double l_cor = 0.0;
  double mean_abs_c = 0.0;
  std::vector<std::size_t> exposure_histogram;  // positions per exposure count 0..T
  CorrelationMatrix correlation;
};

inline std::vector<std::size_t> exposure_histogram(const TilePattern& p) {
  std::vector<std::size_t> h(p.T + 1, 0);
  for (auto c : exposure_count(p)) ++h[c];
  return h;
}

// Statistics of `pattern` over the whole dataset: means fitted on the dataset,
// correlation accumulated in chunks of `chunk` clips.
inline PatternEvaluation evaluate_pattern(const TilePattern& pattern, std::span<const VideoClip> dataset,
                                          const LossOptions& opt = {}, std::size_t chunk = 64) {
  validate(pattern);
  detail::check_batch_geometry(dataset, pattern.T, pattern.M);
  if (total_bits(pattern) == 0) throw DegenerateStatistics("degenerate statistics: pattern has no exposure bits");
  const std::vector<double> mask(pattern.bits.begin(), pattern.bits.end());
  chunk = std::max<std::size_t>(1, chunk);

  std::vector<SampleMatrix> raws;
  for (std::size_t lo = 0; lo < dataset.size(); lo += chunk) {
    const auto part = dataset.subspan(lo, std::min(chunk, dataset.size() - lo));
    raws.push_back(detail::coded_samples(mask, pattern.T, pattern.M, part, opt.normalize, opt.par));
  }
  std::optional<TileMeanTable> means;
  if (opt.contrast == ContrastMode::DatasetPerCell || opt.contrast == ContrastMode::DatasetGlobal) {
    for (const auto& raw : raws) {
      auto t = fit_tile_means(raw, opt.contrast == ContrastMode::DatasetGlobal);
      if (means) means->merge(t); else means = std::move(t);
    }
  }
  CorrelationAccumulator acc(pattern.M * pattern.M);
  for (const auto& raw : raws) acc.add(detail::apply_contrast(raw, opt.contrast, means ? &*means : nullptr));
  PatternEvaluation ev;
  ev.correlation = acc.correlation();
  if (all_degenerate(ev.correlation)) throw DegenerateStatistics();
  ev.l_cor = decorrelation_loss(ev.correlation);
  ev.mean_abs_c = mean_abs_correlation(ev.correlation);
  ev.exposure_histogram = exposure_histogram(pattern);
  return ev;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t T = 16;
  std::size_t M = 8;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_offset = 0.1;
  double init_std = 0.01;
  std::uint64_t seed = 0;
  LossOptions loss{};
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.T == 0 || cfg.M == 0) throw ValidationError("T and M must be >= 1");
  if (cfg.epochs == 0) throw ValidationError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw ValidationError("batch size must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ValidationError("learning rate must be finite and >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw ValidationError("Adam moments must lie in [0,1)");
}

struct TrainReport {
  std::vector<double> step_loss;   // batch loss per optimizer step
  std::vector<double> epoch_loss;  // full-dataset L_Cor of the pattern after each epoch (index 0 = initial)
  std::vector<double> best_loss;   // running minimum of epoch_loss
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;
  std::size_t best_epoch = 0;
  double final_loss = 0.0;         // L_Cor of `pattern`
  TilePattern pattern;
  MaskLogits logits;               // logits after the last step
  std::vector<std::size_t> exposure_histogram;
};

inline MaskLogits initial_logits(const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "optimizer/init"));
  MaskLogits logits(cfg.T, cfg.M);
  for (auto& v : logits.theta) v = cfg.init_offset + cfg.init_std * standard_normal(rng);
  return logits;
}

class AdamState {
 public:
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, const TrainConfig& cfg) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
      v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

// Learns a tile pattern by minimizing the decorrelation loss with Adam and
// straight-through gradients. The tile mean table is refitted once per epoch
// from the raw samples seen during that epoch. Returns the pattern with the
// lowest full-dataset loss among the initial and per-epoch patterns.
inline TrainReport train_pattern(std::span<const VideoClip> dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw ValidationError("empty dataset");
  detail::check_batch_geometry(dataset, cfg.T, cfg.M);
  const bool dataset_means =
      cfg.loss.contrast == ContrastMode::DatasetPerCell || cfg.loss.contrast == ContrastMode::DatasetGlobal;
  const bool global = cfg.loss.contrast == ContrastMode::DatasetGlobal;

  TrainReport report;
  report.logits = initial_logits(cfg);
  AdamState adam(report.logits.theta.size());
  Rng shuffle_rng(derive_seed(cfg.seed, "optimizer/shuffle"));

  auto fit_means = [&](const TilePattern& pattern) {
    const std::vector<double> mask(pattern.bits.begin(), pattern.bits.end());
    std::optional<TileMeanTable> table;
    for (std::size_t lo = 0; lo < dataset.size(); lo += cfg.batch_size) {
      const auto part = dataset.subspan(lo, std::min(cfg.batch_size, dataset.size() - lo));
      auto t = fit_tile_means(detail::coded_samples(mask, cfg.T, cfg.M, part, cfg.loss.normalize, cfg.loss.par), global);
      if (table) table->merge(t); else table = std::move(t);
    }
    return *table;
  };
  auto evaluate = [&](const TilePattern& pattern) {
    if (total_bits(pattern) == 0) return std::numeric_limits<double>::infinity();
    try {
      return evaluate_pattern(pattern, dataset, cfg.loss).l_cor;
    } catch (const DegenerateStatistics&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  TilePattern current = binarize_ste_forward(report.logits);
  report.pattern = current;
  report.epoch_loss.push_back(evaluate(current));
  report.best_loss.push_back(report.epoch_loss.back());

  std::optional<TileMeanTable> means;
  if (dataset_means) means = fit_means(current);

  std::vector<std::size_t> order(dataset.size());
  std::vector<VideoClip> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    std::optional<TileMeanTable> running;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(dataset[order[i]]);
      LossAndGrad lg;
      try {
        lg = loss_and_grad(report.logits, batch, means ? &*means : nullptr, cfg.loss);
      } catch (const DegenerateStatistics&) {
        ++report.skipped_batches;
        continue;
      } catch (const ValidationError&) {
        // A trailing batch too small for Pearson (S < 2).
        ++report.skipped_batches;
        continue;
      }
      if (dataset_means) {
        auto t = fit_tile_means(lg.raw, global);
        if (running) running->merge(t); else running = std::move(t);
      }
      adam.step(report.logits.theta, lg.grad, cfg);
      report.step_loss.push_back(lg.loss);
      ++report.steps;
    }
    if (dataset_means && running) means = std::move(running);

    current = binarize_ste_forward(report.logits);
    const double l = evaluate(current);
    report.epoch_loss.push_back(l);
    if (l < report.best_loss.back()) {
      report.pattern = current;
      report.best_epoch = epoch + 1;
    }
    report.best_loss.push_back(std::min(report.best_loss.back(), l));
  }

  report.pattern.seed = cfg.seed;
  if (total_bits(report.pattern) == 0 || !std::isfinite(report.best_loss.back()))
    throw DegenerateStatistics("degenerate statistics: training collapsed to an all-off pattern");
  report.final_loss = report.best_loss.back();
  report.exposure_histogram = exposure_histogram(report.pattern);
  return report;
}

}  // namespace snappix

// Acceptance gate. One PASS/FAIL line per criterion; exit status is nonzero
// if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fd_check.hpp"
#include "oracles.hpp"
#include "snappix/encoder.hpp"
#include "snappix/energy.hpp"
#include "snappix/hwsim.hpp"
#include "snappix/optimizer.hpp"
#include "snappix/stats.hpp"
#include "snappix/synthetic.hpp"
#include "test_util.hpp"

using namespace snappix;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, double limit_s, const std::function<Verdict()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    v.pass = false;
    v.detail += " (over time limit)";
  }
  std::ostringstream time;
  time.precision(3);
  time << secs;
  std::printf("%s %s %s: %s [%s s]\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str(), time.str().c_str());
  std::fflush(stdout);
  failures += !v.pass;
}

std::vector<double> full_mask_oracle(const VideoClip& clip, const FullMask& m) {
  std::vector<double> x(m.H * m.W, 0.0);
  for (std::size_t i = 0; i < m.H; ++i)
    for (std::size_t j = 0; j < m.W; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < m.T; ++t)
        if (m.bits[(t * m.H + i) * m.W + j]) acc += clip.frames[t].data[i * m.W + j];
      x[i * m.W + j] = acc;
    }
  return x;
}

Verdict c1_encoder_oracle() {
  std::mt19937_64 g(101);
  std::size_t ok = 0;
  const std::size_t n = 1000;
  for (std::size_t trial = 0; trial < n; ++trial) {
    const std::size_t T = 1 + g() % 16, H = 1 + g() % 32, W = 1 + g() % 32;
    const auto clip = oracle::random_clip(g, T, H, W);
    FullMask m(T, H, W);
    std::bernoulli_distribution b(std::uniform_real_distribution<double>(0, 1)(g));
    for (auto& bit : m.bits) bit = b(g);
    const auto x = encode(clip, m);
    ok += x.values == full_mask_oracle(clip, m);
  }
  return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " bit-exact"};
}

Verdict c2_hardware_equivalence() {
  std::mt19937_64 g(202);
  std::size_t ok = 0, consecutive = 0, dark = 0;
  const std::size_t n = 200;
  for (std::size_t trial = 0; trial < n; ++trial) {
    const std::size_t T = 1 + g() % 16, M = std::size_t{1} << (g() % 4);
    const std::size_t H = M * (1 + g() % (32 / M)), W = M * (1 + g() % (32 / M));
    const auto clip = hw::quantize_clip(oracle::random_clip(g, T, H, W));
    auto tile = oracle::random_tile(g, T, M, std::uniform_real_distribution<double>(0.2, 0.9)(g));
    // Force a run of consecutive exposures and one never-exposed pixel row.
    const std::size_t r = g() % M;
    for (std::size_t t = 0; t < std::min<std::size_t>(T, 3); ++t) tile.at(t, r, 0) = 1;
    if (M > 1) {
      const std::size_t dr = (r + 1) % M;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < M; ++c) tile.at(t, dr, c) = 0;
      ++dark;
    }
    consecutive += T > 1;
    const auto sim = hw::run_capture(clip, tile);
    const auto enc = encode(clip, tile);
    ok += sim.fd_image.values == enc.values && sim.fd_image.counts == enc.counts;
  }
  return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " exact (" + std::to_string(consecutive) +
                       " with consecutive exposures, " + std::to_string(dark) + " with a dark row)"};
}

Verdict c3_gradient() {
  const ContrastMode modes[] = {ContrastMode::DatasetPerCell, ContrastMode::None, ContrastMode::PerSample};
  const std::size_t n = 60;
  double worst = 0.0;
  std::size_t ok = 0, max_s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = fdcheck::run_instance(5000 + i, modes[i % 3], (i / 3) % 2 == 0, 8, 2);
    worst = std::max(worst, r.rel_error);
    max_s = std::max(max_s, r.S);
    ok += r.rel_error < 1e-4 && r.S <= 64;
  }
  std::ostringstream d;
  d << ok << "/" << n << " instances (M=2, T=8, S<=" << max_s << ") with relative error < 1e-4, worst " << worst;
  return {ok == n, d.str()};
}

Verdict c4_decorrelation() {
  SyntheticCorpusConfig sc;  // 500 clips, T=16, 32x32
  const auto data = synthetic_corpus(sc);
  TrainConfig cfg;  // T=16, M=8
  const auto rep = train_pattern(data, cfg);
  const auto long_ev = evaluate_pattern(long_exposure(16, 8), data);
  const auto short_ev = evaluate_pattern(short_exposure(16, 8), data);
  const auto rand_ev = evaluate_pattern(random_pattern(16, 8, 0.5, derive_seed(cfg.seed, "acceptance/random")), data);
  const auto trained_ev = evaluate_pattern(rep.pattern, data);
  const bool vs_random = trained_ev.l_cor < 0.8 * rand_ev.l_cor;
  const bool vs_long = trained_ev.l_cor < 0.5 * long_ev.l_cor;
  const bool order = long_ev.mean_abs_c >= short_ev.mean_abs_c && short_ev.mean_abs_c >= rand_ev.mean_abs_c &&
                     rand_ev.mean_abs_c >= trained_ev.mean_abs_c;
  std::ostringstream d;
  d.precision(4);
  d << data.size() << " clips; L_Cor long " << long_ev.l_cor << " short " << short_ev.l_cor << " random "
    << rand_ev.l_cor << " trained " << trained_ev.l_cor << " (trained/random " << trained_ev.l_cor / rand_ev.l_cor
    << ", trained/long " << trained_ev.l_cor / long_ev.l_cor << "); mean|C| " << long_ev.mean_abs_c << " >= "
    << short_ev.mean_abs_c << " >= " << rand_ev.mean_abs_c << " >= " << trained_ev.mean_abs_c
    << (order ? "" : " ORDER VIOLATED");
  return {vs_random && vs_long && order, d.str()};
}

Verdict c5_energy() {
  const EnergyConfig cfg;
  const double reduction = transmission_reduction(cfg);
  const double short_ratio = edge_energy(cfg, Link::ShortWifi).ratio;
  const auto d = long_range_discrepancy(cfg);
  std::ostringstream s;
  s.precision(6);
  s << "reduction " << reduction << "x; short-range " << short_ratio << "x; long-range " << d.computed_ratio
    << "x vs claimed " << d.claimed_ratio << "x: LoRa cost " << d.e_lora_configured
    << " pJ/pixel gives ~16x, the claim implies " << d.e_lora_matching_claim
    << " pJ/pixel, so the published unit looks inconsistent (nJ vs uJ)";
  const bool ok = reduction == 16.0 && std::abs(short_ratio - 7.62) <= 0.1 && std::isfinite(d.computed_ratio) &&
                  std::isfinite(d.e_lora_matching_claim);
  return {ok, s.str()};
}

Verdict c6_compression() {
  std::mt19937_64 g(606);
  const auto clip = oracle::random_clip(g, 16, 112, 112);
  const auto coded = encode(clip, sparse_random(16, 8, 1));
  const std::size_t raw = raw_clip_bytes(clip);
  const std::size_t out = quantize_coded(coded, 16).size();
  const bool ok = raw == 16 * out && coded_image_bytes(coded) == out && compression_ratio(clip, coded) == 16.0;
  return {ok, "raw " + std::to_string(raw) + " bytes, coded " + std::to_string(out) + " bytes"};
}

Verdict c7_properties() {
  std::vector<std::string> failed;
  auto check = [&](const char* name, bool ok) {
    if (!ok) failed.push_back(name);
  };
  std::mt19937_64 g(707);

  // Encode linearity.
  bool lin = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = oracle::random_clip(g, 8, 8, 8), b = oracle::random_clip(g, 8, 8, 8);
    const double al = std::uniform_real_distribution<double>(-3, 3)(g);
    const double be = std::uniform_real_distribution<double>(-3, 3)(g);
    VideoClip mix = a;
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t k = 0; k < 64; ++k) mix.frames[t].data[k] = al * a.frames[t].data[k] + be * b.frames[t].data[k];
    const auto p = oracle::random_tile(g, 8, 4, 0.5);
    const auto xa = encode(a, p), xb = encode(b, p), xm = encode(mix, p);
    for (std::size_t k = 0; k < 64; ++k) lin &= std::abs(xm.values[k] - (al * xa.values[k] + be * xb.values[k])) <= 1e-6;
  }
  check("encode linearity", lin);

  // Pearson symmetry / diagonal / bounds and L_Cor range.
  bool pearson_ok = true, loss_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    SampleMatrix s;
    s.P = 2 + g() % 15;
    s.S = 2 + g() % 100;
    s.tiles_per_image = 1;
    std::normal_distribution<double> n(0, 1);
    std::vector<double> common(s.S);
    for (auto& c : common) c = n(g);
    for (std::size_t p = 0; p < s.P; ++p) {
      const double w = std::uniform_real_distribution<double>(-2, 2)(g);
      for (std::size_t k = 0; k < s.S; ++k) s.data.push_back(w * common[k] + n(g));
    }
    const auto C = pearson(s);
    for (std::size_t i = 0; i < C.P; ++i) {
      pearson_ok &= std::abs(C.at(i, i) - 1.0) <= 1e-6;
      for (std::size_t j = 0; j < C.P; ++j) pearson_ok &= C.at(i, j) == C.at(j, i) && std::abs(C.at(i, j)) <= 1.0;
    }
    const double L = decorrelation_loss(C);
    loss_ok &= L >= 0.0 && L <= 1.0;
  }
  check("pearson symmetry/diagonal/bounds", pearson_ok);
  check("L_Cor in [0,1]", loss_ok);

  // Sparse random: exactly one exposure per position.
  bool sparse_ok = true;
  for (std::uint64_t seed = 0; seed < 200; ++seed)
    for (auto c : exposure_count(sparse_random(1 + seed % 16, 1 + seed % 9, seed))) sparse_ok &= c == 1;
  check("sparse-random exactly one exposure", sparse_ok);

  // Tile repetition of expanded masks.
  bool tile_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + g() % 16, M = 1 + g() % 8, H = M * (1 + g() % 4), W = M * (1 + g() % 4);
    const auto tile = oracle::random_tile(g, T, M, 0.5);
    const auto mask = expand(tile, H, W);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) tile_ok &= mask.at(t, i, j) == tile.at(t, i % M, j % M);
  }
  check("expanded masks tile-repetitive", tile_ok);

  // File round trips.
  testutil::TempDir dir("accept");
  bool pat_ok = true, coded_ok = true;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto p = random_pattern(1 + seed % 16, 1 + seed % 8, 0.4, seed);
    save_pattern(p, dir / "p.cepat");
    const auto q = load_pattern(dir / "p.cepat");
    pat_ok &= q == p && q.seed == p.seed;
    auto x = encode(oracle::random_clip(g, 16, 16, 16), random_pattern(16, 8, 0.5, seed));
    if (seed % 2) x = normalize(x);
    write_coded(x, dir / "c.snpx");
    const auto y = read_coded(dir / "c.snpx");
    coded_ok &= y.counts == x.counts && y.normalized == x.normalized;
    for (std::size_t k = 0; k < x.values.size(); ++k)
      coded_ok &= y.values[k] == static_cast<double>(static_cast<float>(x.values[k]));
  }
  check("pattern file round trip", pat_ok);
  check("coded image round trip", coded_ok);

  // Seeded determinism, bitwise.
  SyntheticCorpusConfig sc;
  sc.clips = 32;
  sc.T = 8;
  sc.height = sc.width = 16;
  sc.seed = 77;
  const auto c1 = synthetic_corpus(sc), c2 = synthetic_corpus(sc);
  bool det = random_pattern(16, 8, 0.5, 3).bits == random_pattern(16, 8, 0.5, 3).bits &&
             sparse_random(16, 8, 3).bits == sparse_random(16, 8, 3).bits;
  for (std::size_t i = 0; i < c1.size(); ++i)
    for (std::size_t t = 0; t < 8; ++t) det &= c1[i].frames[t].data == c2[i].frames[t].data;
  TrainConfig tc;
  tc.T = 8;
  tc.M = 4;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.seed = 5;
  const auto r1 = train_pattern(c1, tc);
  tc.loss.par.threads = 2;
  const auto r2 = train_pattern(c2, tc);
  det &= r1.logits.theta == r2.logits.theta && r1.step_loss == r2.step_loss && r1.pattern == r2.pattern;
  check("seeded determinism", det);

  std::string d = failed.empty() ? "9/9 suites green" : "failed:";
  for (const auto& f : failed) d += " [" + f + "]";
  return {failed.empty(), d};
}

Verdict c8_not_reproducible() {
  return {true,
          "stated: downstream action-recognition accuracies, absolute reconstruction-quality numbers, "
          "pre-training ablations and silicon area are not reproducible at desk scale (they need the "
          "out-of-scope transformer models and a fabricated chip); criteria C1-C7 cover the pipeline instead"};
}

}  // namespace

int main() {
  report("C1", "encoder matches brute-force oracle", 10.0, c1_encoder_oracle);
  report("C2", "hardware simulation equals encoder", 30.0, c2_hardware_equivalence);
  report("C3", "straight-through gradient vs finite differences", 60.0, c3_gradient);
  report("C4", "decorrelation efficacy on synthetic corpus", 600.0, c4_decorrelation);
  report("C5", "energy model", 1.0, c5_energy);
  report("C6", "compression ratio", 0.0, c6_compression);
  report("C7", "property suites", 0.0, c7_properties);
  report("C8", "desk-scale limits", 0.0, c8_not_reproducible);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}

#include <gtest/gtest.h>

#include <cstring>

#include "oracles.hpp"
#include "snappix/encoder.hpp"
#include "test_util.hpp"

using namespace snappix;

TEST(Encode, TwoSlotExample) {
  VideoClip clip;
  clip.frames = {Frame(1, 1, 0.3), Frame(1, 1, 0.5)};
  TilePattern p(2, 1);
  p.bits = {1, 0};
  EXPECT_DOUBLE_EQ(encode(clip, p).values[0], 0.3);
  p.bits = {1, 1};
  EXPECT_DOUBLE_EQ(encode(clip, p).values[0], 0.8);
  EXPECT_EQ(encode(clip, p).counts[0], 2u);
}

TEST(Encode, MatchesTripleLoopOracle) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + g() % 16, M = 1 + g() % 4;
    const std::size_t H = M * (1 + g() % (32 / M)), W = M * (1 + g() % (32 / M));
    const auto clip = oracle::random_clip(g, T, H, W);
    const auto tile = oracle::random_tile(g, T, M, 0.5);
    const auto x = encode(clip, tile, Parallelism{1 + static_cast<unsigned>(trial % 3)});
    ASSERT_EQ(x.values, oracle::coded(clip, tile));
    ASSERT_EQ(x.counts, oracle::counts(tile, H, W));
  }
}

TEST(Encode, Linearity) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = oracle::random_clip(g, 8, 8, 8);
    const auto b = oracle::random_clip(g, 8, 8, 8);
    const double alpha = std::uniform_real_distribution<double>(-2, 2)(g);
    const double beta = std::uniform_real_distribution<double>(-2, 2)(g);
    VideoClip mix = a;
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t k = 0; k < 64; ++k)
        mix.frames[t].data[k] = alpha * a.frames[t].data[k] + beta * b.frames[t].data[k];
    const auto p = random_pattern(8, 4, 0.5, trial);
    const auto xa = encode(a, p), xb = encode(b, p), xm = encode(mix, p);
    for (std::size_t k = 0; k < 64; ++k)
      ASSERT_NEAR(xm.values[k], alpha * xa.values[k] + beta * xb.values[k], 1e-6);
  }
}

TEST(Encode, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 g(8);
  const auto clip = oracle::random_clip(g, 16, 32, 32);
  const auto p = random_pattern(16, 8, 0.5, 1);
  const auto one = encode(clip, p, Parallelism{1});
  for (unsigned th : {2u, 3u, 7u}) EXPECT_EQ(encode(clip, p, Parallelism{th}).values, one.values);
}

TEST(Encode, Normalize) {
  VideoClip clip;
  clip.frames = {Frame(1, 2, 0.2), Frame(1, 2, 0.6)};
  TilePattern p(2, 2);  // column 0 exposed twice, column 1 never; 1x2 frame is not divisible by 2
  FullMask m(2, 1, 2);
  m.at(0, 0, 0) = m.at(1, 0, 0) = 1;
  const auto x = normalize(encode(clip, m));
  EXPECT_DOUBLE_EQ(x.values[0], 0.4);
  EXPECT_DOUBLE_EQ(x.values[1], 0.0);
  EXPECT_EQ(x.zero_count_positions, 1u);
  EXPECT_TRUE(x.normalized);
  EXPECT_THROW(normalize(x), ValidationError);
  EXPECT_THROW(encode(clip, p), DimensionError);
}

TEST(Compression, RatioIsT) {
  std::mt19937_64 g(1);
  const auto clip = oracle::random_clip(g, 16, 112, 112);
  const auto x = encode(clip, sparse_random(16, 8, 3));
  EXPECT_EQ(raw_clip_bytes(clip), 16u * 112u * 112u);
  EXPECT_EQ(coded_image_bytes(x), 112u * 112u);
  EXPECT_EQ(compression_ratio(clip, x), 16.0);
  EXPECT_EQ(compression_ratio(16, 112, 112, 8, 12), 16.0 * 8 / 12);
}

TEST(Export, QuantizeDivideByT) {
  CodedImage x(1, 3);
  x.values = {0.0, 8.0, 16.0};
  const auto q = quantize_coded(x, 16);
  EXPECT_EQ(q, (std::vector<std::uint8_t>{0, 128, 255}));  // 127.5 rounds to even
}

TEST(Snpx, RoundTripExactAtFloat) {
  testutil::TempDir d("snpx");
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto clip = oracle::random_clip(g, 16, 16, 24);
    auto x = encode(clip, random_pattern(16, 8, 0.5, trial));
    if (trial % 2) x = normalize(x);
    const auto path = d / ("c" + std::to_string(trial) + ".snpx");
    write_coded(x, path);
    const auto y = read_coded(path);
    ASSERT_EQ(y.H, x.H);
    ASSERT_EQ(y.W, x.W);
    ASSERT_EQ(y.counts, x.counts);
    ASSERT_EQ(y.normalized, x.normalized);
    for (std::size_t k = 0; k < x.values.size(); ++k)
      ASSERT_EQ(y.values[k], static_cast<double>(static_cast<float>(x.values[k])));
    // Serializing the decoded image reproduces the bytes.
    ASSERT_EQ(serialize_coded(y), serialize_coded(x));
  }
}

TEST(Snpx, Layout) {
  CodedImage x(1, 2);
  x.values = {1.0, 0.5};
  x.counts = {3, 0};
  const auto b = serialize_coded(x);
  ASSERT_EQ(b.size(), 4u + 1 + 4 + 4 + 1 + 2 * 4 + 2 + 4);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SNPX");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 1);  // H little-endian
  EXPECT_EQ(b[9], 2);  // W
  EXPECT_EQ(b[13], 0);
  float f;
  std::memcpy(&f, b.data() + 14, 4);
  EXPECT_EQ(f, 1.0f);
  EXPECT_EQ(b[22], 3);
}

TEST(Snpx, Errors) {
  CodedImage x(2, 2);
  x.values = {1, 2, 3, 4};
  x.counts = {1, 1, 1, 1};
  const auto good = serialize_coded(x);
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_coded(bad), ParseError);
  bad = good;
  bad[4] = 2;
  EXPECT_THROW(deserialize_coded(bad), ParseError);
  bad = good;
  bad[15] ^= 0x40;
  EXPECT_THROW(deserialize_coded(bad), ParseError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(deserialize_coded(bad), ParseError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(deserialize_coded(bad), ParseError);
  x.counts[0] = 300;
  EXPECT_THROW(serialize_coded(x), ValidationError);
  EXPECT_THROW(read_coded("/nonexistent.snpx"), IoError);
}

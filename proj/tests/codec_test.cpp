#include "carp/codec.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "carp/error.hpp"
#include "carp/metrics.hpp"
#include "test_support.hpp"

namespace carp {
namespace {

// Random valid tree: each non-atomic node is pruned with probability p_prune,
// otherwise split along a random divisible axis.
std::uint32_t grow(MapTree& t, std::size_t flat, std::mt19937_64& rng, double p_prune) {
  const auto id = static_cast<std::uint32_t>(t.nodes.size());
  t.nodes.push_back({flat, -1, false, 0, 0});
  const Block b = t.index.block(flat);
  if (b.is_atomic()) return id;
  if (std::bernoulli_distribution(p_prune)(rng)) {
    t.nodes[id].pruned = true;
    return id;
  }
  const auto axes = divisible_dims(b);
  const int axis = axes[std::uniform_int_distribution<std::size_t>(0, axes.size() - 1)(rng)];
  const auto [l, r] = t.index.child_indices(flat, axis);
  t.nodes[id].split_axis = axis;
  const std::uint32_t left = grow(t, l, rng, p_prune);
  const std::uint32_t right = grow(t, r, rng, p_prune);
  t.nodes[id].left = left;
  t.nodes[id].right = right;
  return id;
}

MapTree random_tree(const Dims& dims, std::mt19937_64& rng, double p_prune) {
  MapTree t;
  t.index = LatticeIndex(dims);
  grow(t, t.index.root(), rng, p_prune);
  return t;
}

double rms(const PixelGrid& a, const PixelGrid& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return std::sqrt(s / static_cast<double>(a.values.size()));
}

TEST(TreeCodec, Examples) {
  MapTree split;
  split.index = LatticeIndex({2});
  const auto [l, r] = split.index.child_indices(split.index.root(), 0);
  split.nodes = {{split.index.root(), 0, false, 1, 2}, {l}, {r}};
  const BitString bits = serialize_tree(split);
  EXPECT_EQ(bits.bit_count, 1u);
  EXPECT_EQ(bits.bytes, (std::vector<std::uint8_t>{0x00}));
  EXPECT_EQ(deserialize_tree(bits, {2}), split);

  MapTree pruned;
  pruned.index = LatticeIndex({4, 4});
  pruned.nodes = {{pruned.index.root(), -1, true}};
  const BitString one = serialize_tree(pruned);
  EXPECT_EQ(one.bit_count, 1u);
  EXPECT_EQ(one.bytes, (std::vector<std::uint8_t>{0x80}));
  EXPECT_EQ(axis_bits(1), 0);
  EXPECT_EQ(axis_bits(2), 1);
  EXPECT_EQ(axis_bits(3), 2);
  EXPECT_EQ(axis_bits(4), 2);
}

TEST(TreeCodec, RandomRoundTrips) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const Dims dims = trial % 2 ? Dims{8, 8} : Dims{2, 4, 8};
    const MapTree t = random_tree(dims, rng, 0.1 * (trial % 5));
    t.validate();
    ASSERT_EQ(deserialize_tree(serialize_tree(t), dims), t);
  }
}

TEST(TreeCodec, RejectsTruncatedAndInvalidBits) {
  std::mt19937_64 rng(42);
  const MapTree t = random_tree({8, 8}, rng, 0.0);
  BitString bits = serialize_tree(t);
  BitString cut = bits;
  cut.bit_count -= 1;
  EXPECT_THROW(deserialize_tree(cut, {8, 8}), StreamError);
  BitString extra = bits;
  extra.bytes.push_back(0);
  extra.bit_count += 8;
  EXPECT_THROW(deserialize_tree(extra, {8, 8}), StreamError);
  // Axis 1 on a 2x1 block is not divisible.
  BitString bad{{0b01000000}, 2};
  EXPECT_THROW(deserialize_tree(bad, {2, 1}), StreamError);
}

TEST(Tokenize, ZeroRunsRespectThreshold) {
  const std::vector<std::int64_t> v{0, 0, 0, 5, 0, 0, 0, 0, 0};
  const SegmentSymbols a = tokenize_segment(v, 4);
  EXPECT_EQ(a.symbols, (std::vector<Symbol>{0, 0, 0, 5, kZeroRun}));
  EXPECT_EQ(a.run_lengths, (std::vector<std::uint16_t>{5}));
  const SegmentSymbols b = tokenize_segment(v, 100);
  EXPECT_EQ(b.symbols.size(), v.size());
  EXPECT_TRUE(b.run_lengths.empty());
  const std::vector<std::int64_t> longrun(70000, 0);
  const SegmentSymbols c = tokenize_segment(longrun, 2);
  EXPECT_EQ(c.run_lengths, (std::vector<std::uint16_t>{65535, 4465}));
}

TEST(Stream, HeaderLayout) {
  std::mt19937_64 rng(43);
  PixelGrid g = testing::random_grid({3, 5}, rng);
  const CompressedStream s = compress(g, Hyperparams::defaults(2.0), 2.0);
  const std::vector<std::uint8_t> bytes = encode_stream(s);
  ASSERT_GE(bytes.size(), 9u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CARP");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(bytes[6] | (bytes[7] << 8), 1);
  EXPECT_EQ(bytes[8], 8);
  EXPECT_EQ(bytes[9], 3);    // dims_original[0], little-endian u32
  EXPECT_EQ(bytes[13], 5);
  EXPECT_EQ(bytes[17], 4);   // dims_padded
  EXPECT_EQ(bytes[21], 8);
  EXPECT_EQ(s.header.scales(), 5);
  EXPECT_EQ(decode_stream(bytes), s);
}

TEST(Stream, CorruptionIsStreamError) {
  std::mt19937_64 rng(44);
  const CompressedStream s = compress(testing::random_grid({16, 16}, rng), Hyperparams::defaults(4.0), 4.0);
  std::vector<std::uint8_t> bytes = encode_stream(s);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_stream(bad), StreamError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_stream(bad), StreamError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_stream(bad), StreamError);
  EXPECT_THROW(decode_stream(std::span<const std::uint8_t>(bytes.data(), 20)), StreamError);
  EXPECT_THROW(decode_stream(std::span<const std::uint8_t>{}), StreamError);
}

TEST(Stream, DecodesAtEverySegmentBoundaryOnly) {
  const PixelGrid g = testing::synthetic_scene({32, 32}, 3);
  const CompressedStream s = compress(g, Hyperparams::defaults(4.0), 4.0);
  const std::vector<std::uint8_t> bytes = encode_stream(s);
  const std::vector<std::size_t> ends = segment_boundaries(s);
  ASSERT_EQ(ends.size(), 11u);
  EXPECT_EQ(ends.back(), bytes.size());
  for (std::size_t k = 0; k < ends.size(); ++k) {
    const auto prefix = std::span<const std::uint8_t>(bytes.data(), ends[k]);
    const CompressedStream part = decode_stream(prefix);
    EXPECT_EQ(part.available_scales(), static_cast<int>(k));
    const PixelGrid img = decompress(part);
    EXPECT_EQ(img, decompress(s, static_cast<int>(k)));
    if (k > 0 && ends[k] - 1 > ends[k - 1])
      EXPECT_THROW(decode_stream(std::span<const std::uint8_t>(bytes.data(), ends[k] - 1)), StreamError);
  }
}

TEST(Compress, ConstantImageIsTinyAndExact) {
  PixelGrid g = PixelGrid::zeros({256, 256});
  std::fill(g.values.begin(), g.values.end(), 123.0);
  for (double sigma : {0.5, 1.0, 8.0}) {
    const CompressedStream s = compress(g, Hyperparams::defaults(sigma), default_quant_step(sigma));
    const auto bytes = encode_stream(s);
    EXPECT_LT(bytes.size(), raw_size_bytes(g) / 100);
    EXPECT_EQ(decompress(bytes), g);
  }
}

TEST(Compress, NearLosslessWithoutPruning) {
  std::mt19937_64 rng(45);
  for (const Dims& dims : {Dims{16, 16}, Dims{5, 9}, Dims{4, 8, 8}}) {
    const PixelGrid g = testing::random_grid(dims, rng);
    Hyperparams hp = Hyperparams::defaults(0.01);
    hp.eta0 = 0;
    const double q = default_quant_step(0.01);
    EXPECT_EQ(q, 0.5);
    const PixelGrid out = decompress(encode_stream(compress(g, hp, q)));
    ASSERT_EQ(out.dims, g.dims);
    EXPECT_LE(rms(out, g), q / 2 * 1.01);
  }
}

TEST(Compress, MultiChannelAndSixteenBit) {
  std::mt19937_64 rng(46);
  const PixelGrid color = testing::random_grid({8, 12}, rng, 255, 3);
  Hyperparams hp = Hyperparams::defaults(0.01);
  hp.eta0 = 0;
  const PixelGrid back = decompress(encode_stream(compress(color, hp, 0.5)));
  EXPECT_EQ(back.channels, 3);
  EXPECT_LE(rms(back, color), 0.2525);
  const PixelGrid deep = testing::random_grid({8, 8}, rng, 65535);
  const PixelGrid deep_back = decompress(encode_stream(compress(deep, hp, 0.5)));
  EXPECT_EQ(deep_back.bit_depth, 16);
  EXPECT_LE(rms(deep_back, deep), 0.2525);
}

TEST(Compress, DeterministicBytes) {
  const PixelGrid g = testing::synthetic_scene({64, 64}, 4);
  const Hyperparams hp = Hyperparams::defaults(6.0);
  EXPECT_EQ(encode_stream(compress(g, hp, 6.0)), encode_stream(compress(g, hp, 6.0)));
}

TEST(Decompress, PrefixExtremes) {
  const PixelGrid g = testing::synthetic_scene({32, 32}, 6);
  const CompressedStream s = compress(g, Hyperparams::defaults(2.0), 2.0);
  const PixelGrid flat = decompress(s, 0);
  for (double v : flat.values) EXPECT_EQ(v, flat.values[0]);
  double mean = 0;
  for (double v : g.values) mean += v;
  mean /= static_cast<double>(g.values.size());
  EXPECT_NEAR(flat.values[0], mean, 2.0 / 32 + 0.5);
  EXPECT_EQ(decompress(s, s.header.scales()), decompress(s));
  EXPECT_THROW(decompress(s, -1), ContractViolation);
  EXPECT_THROW(decompress(s, s.header.scales() + 1), ContractViolation);
}

TEST(Decompress, ProgressivePsnrIsMonotone) {
  const PixelGrid g = testing::synthetic_scene({64, 64}, 7);
  const CompressedStream s = compress(g, Hyperparams::defaults(2.0), 2.0);
  double prev = -INFINITY;
  for (int k = 0; k <= s.header.scales(); ++k) {
    const double p = psnr(g, decompress(s, k));
    EXPECT_GE(p, prev - 0.1) << k;
    prev = std::max(prev, p);
  }
}

TEST(Compress, RatioNonIncreasingAsStepShrinks) {
  const PixelGrid g = testing::synthetic_scene({64, 64}, 8);
  const Hyperparams hp = Hyperparams::defaults(4.0);
  double prev = INFINITY;
  for (double q : {16.0, 8.0, 4.0, 2.0, 1.0, 0.5}) {
    const CompressedStream s = compress(g, hp, q);
    const double ratio = compression_ratio(s.header, encode_stream(s).size());
    EXPECT_LE(ratio, prev * (1 + 1e-12)) << q;
    prev = ratio;
  }
}

TEST(Compress, RejectsBadArguments) {
  const PixelGrid g = PixelGrid::zeros({4, 4});
  EXPECT_THROW(compress(g, Hyperparams::defaults(1.0), 0.0), ContractViolation);
  EXPECT_THROW(compress(g, Hyperparams::defaults(-1.0), 1.0), ContractViolation);
  EXPECT_THROW(compress(PixelGrid::zeros({256, 256}), Hyperparams::defaults(1.0), 1.0, nullptr, {1 << 20}),
               ResourceError);
}

TEST(RatioSearch, HitsTargetOnNaturalImage) {
  const PixelGrid img = crop(load(testing::data_path("camera.pgm")), {256, 256});
  const RatioSearchResult r = target_ratio_search(img, Hyperparams::defaults(1.0), 10.0, 0.1);
  EXPECT_TRUE(r.converged);
  EXPECT_GE(r.ratio, 9.0);
  EXPECT_LE(r.ratio, 11.0);
  EXPECT_LE(r.evaluations, 30);
  EXPECT_EQ(r.stream_bytes, encode_stream(r.stream).size());
}

TEST(RatioSearch, ErrorsAndTrivialTargets) {
  const PixelGrid g = testing::synthetic_scene({32, 32}, 9);
  EXPECT_THROW(target_ratio_search(g, Hyperparams::defaults(1.0), 1.0, 0.1), RangeError);
  EXPECT_THROW(target_ratio_search(g, Hyperparams::defaults(1.0), 0.5, 0.1), RangeError);

  std::vector<std::string> warnings;
  set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  PixelGrid flat = PixelGrid::zeros({64, 64});
  std::fill(flat.values.begin(), flat.values.end(), 42.0);
  const RatioSearchResult r = target_ratio_search(flat, Hyperparams::defaults(1.0), 4.0, 0.1);
  set_warning_handler(nullptr);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.sigma, 0.01);
  EXPECT_GT(r.ratio, 4.0);
  EXPECT_EQ(warnings.size(), 1u);
}

}  // namespace
}  // namespace carp

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carp/bayes.hpp"
#include "carp/grid.hpp"
#include "carp/haar.hpp"
#include "carp/huffman.hpp"
#include "carp/map_tree.hpp"

namespace carp {

inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr char kStreamMagic[4] = {'C', 'A', 'R', 'P'};
inline constexpr std::size_t kMaxZeroRun = 65535;

// Preorder; per non-atomic node one prune bit, then ceil(log2 m) axis bits
// when the node is split. Atomic nodes emit nothing.
BitString serialize_tree(const MapTree& tree);
MapTree deserialize_tree(const BitString& bits, const Dims& padded_dims);

int axis_bits(std::size_t ndim);

// max(sigma, 1/2).
double default_quant_step(double sigma);

struct StreamHeader {
  std::uint8_t version = kStreamVersion;
  Dims dims_original;
  Dims dims_padded;
  int bit_depth = 8;
  int channels = 1;
  double sigma = 1.0;
  double q = 1.0;
  Hyperparams hp;

  std::size_t ndim() const { return dims_padded.size(); }
  // Detail scales J; the stream carries J + 1 segments (scaling first).
  int scales() const;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

// In-memory form of a .carp file. segments[s][c] is the byte-aligned Huffman
// payload of segment s for channel c: segment 0 holds the scaling
// coefficient, segment s >= 1 the 2^(s-1) details of scale s - 1.
struct CompressedStream {
  StreamHeader header;
  BitString tree;
  std::vector<CodeTable> tables;
  std::vector<std::vector<std::vector<std::uint8_t>>> segments;

  // Number of complete detail scales present (segments beyond the scaling
  // segment).
  int available_scales() const { return static_cast<int>(segments.size()) - 1; }

  friend bool operator==(const CompressedStream&, const CompressedStream&) = default;
};

// Little-endian container; see README for the byte layout.
std::vector<std::uint8_t> encode_stream(const CompressedStream& stream);

// Accepts a stream truncated exactly at a segment boundary; anything else
// short of the full length is a StreamError.
CompressedStream decode_stream(std::span<const std::uint8_t> bytes);

// Byte offsets (from stream start) at which each segment ends.
std::vector<std::size_t> segment_boundaries(const CompressedStream& stream);

struct CompressStats {
  std::size_t tree_nodes = 0;
  std::size_t tree_leaves = 0;
  std::size_t pruned_leaves = 0;
  std::size_t pruned_pixels = 0;
  double log_marginal = 0.0;
  double stats_ms = 0.0;
  double posterior_ms = 0.0;
  double tree_ms = 0.0;
  double coding_ms = 0.0;
};

struct CompressOptions {
  std::size_t memory_budget = kDefaultMemoryBudget;
};

// Builds the MAP tree on the channel mean, substitutes block means inside
// pruned leaves, and codes every channel along the induced permutation.
// Unpadded grids are padded first.
CompressedStream compress(const PixelGrid& grid, const Hyperparams& hp, double q, CompressStats* stats = nullptr,
                          const CompressOptions& options = {});

// Decodes the scaling coefficient and detail scales < prefix_scales (all
// available scales when omitted), then crops to the original extents and
// rounds into the integer range.
PixelGrid decompress(const CompressedStream& stream, std::optional<int> prefix_scales = std::nullopt);
PixelGrid decompress(std::span<const std::uint8_t> bytes, std::optional<int> prefix_scales = std::nullopt);

// Symbol stream of one segment: literal quantized values and kZeroRun tokens
// each followed by a 16-bit run length. Runs shorter than `min_run` stay literal.
struct SegmentSymbols {
  std::vector<Symbol> symbols;
  std::vector<std::uint16_t> run_lengths;
};
SegmentSymbols tokenize_segment(std::span<const std::int64_t> values, std::size_t min_run);

std::size_t raw_size_bytes(const PixelGrid& grid);
std::size_t raw_size_bytes(const StreamHeader& header);
double compression_ratio(const StreamHeader& header, std::size_t stream_bytes);

struct RatioSearchResult {
  double sigma = 0.0;
  double q = 0.0;
  double ratio = 0.0;
  CompressedStream stream;
  std::size_t stream_bytes = 0;
  int evaluations = 0;
  bool converged = false;
};

// Searches sigma (tau0 * sigma held fixed, q = default_quant_step(sigma))
// for an achieved ratio within target * (1 +- tol), doubling to bracket and
// then bisecting in log sigma, with at most 30 compressions. Returns the
// closest stream with converged = false (and a warning) on failure. Throws
// RangeError for targets <= 1.
RatioSearchResult target_ratio_search(const PixelGrid& grid, const Hyperparams& hp_base, double target_ratio,
                                      double tol, const CompressOptions& options = {});

}  // namespace carp

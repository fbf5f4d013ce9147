#include "carp/codec.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>

#include "carp/error.hpp"

namespace carp {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

constexpr std::size_t kNoRuns = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kRunCandidates[] = {2, 4, 8, 16, 32, 64, 128, kNoRuns};
constexpr int kRunLengthBits = 16;

std::vector<std::span<const std::int64_t>> segment_views(const QuantizedPyramid& p) {
  std::vector<std::span<const std::int64_t>> views;
  views.emplace_back(&p.scaling, 1);
  for (const auto& d : p.details) views.emplace_back(d);
  return views;
}

struct ChannelCode {
  CodeTable table;
  std::vector<std::vector<std::uint8_t>> segments;
};

// Picks the zero-run threshold minimizing total payload plus table bits.
ChannelCode encode_channel(const QuantizedPyramid& pyramid) {
  const auto views = segment_views(pyramid);
  std::size_t best_cost = kNoRuns;
  std::size_t best_run = kNoRuns;
  for (std::size_t min_run : kRunCandidates) {
    Histogram hist;
    std::size_t runs = 0;
    for (const auto& v : views) {
      const SegmentSymbols seg = tokenize_segment(v, min_run);
      for (Symbol s : seg.symbols) ++hist[s];
      runs += seg.run_lengths.size();
    }
    const CodeTable table = huffman_build(hist);
    std::size_t cost = runs * kRunLengthBits;
    for (const auto& [s, f] : hist) cost += f * static_cast<std::size_t>(table.length_of(s));
    ByteWriter tw;
    table.write(tw);
    cost += tw.size() * 8;
    if (cost < best_cost) {
      best_cost = cost;
      best_run = min_run;
    }
  }

  std::vector<SegmentSymbols> tokens;
  Histogram hist;
  for (const auto& v : views) {
    tokens.push_back(tokenize_segment(v, best_run));
    for (Symbol s : tokens.back().symbols) ++hist[s];
  }
  ChannelCode out{huffman_build(hist), {}};
  for (const SegmentSymbols& seg : tokens) {
    BitWriter w;
    std::size_t run = 0;
    for (Symbol s : seg.symbols) {
      out.table.encode(s, w);
      if (s == kZeroRun) w.put_bits(seg.run_lengths[run++], kRunLengthBits);
    }
    out.segments.push_back(w.take());
  }
  return out;
}

std::vector<std::int64_t> decode_segment(std::span<const std::uint8_t> bytes, const CodeTable& table,
                                         std::size_t count) {
  BitReader r(bytes);
  std::vector<std::int64_t> out;
  out.reserve(count);
  while (out.size() < count) {
    const Symbol s = table.decode(r);
    if (s == kZeroRun) {
      const auto run = static_cast<std::size_t>(r.get_bits(kRunLengthBits));
      if (run == 0 || run > count - out.size()) throw StreamError("zero run overruns its segment");
      out.insert(out.end(), run, 0);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

void write_tree_node(const MapTree& tree, const TreeNode& node, int bits_per_axis, BitWriter& w) {
  if (tree.index.shape_of(node.block) == 0) return;
  w.put_bit(node.pruned);
  if (node.pruned) return;
  w.put_bits(static_cast<std::uint64_t>(node.split_axis), bits_per_axis);
  write_tree_node(tree, tree.nodes[node.left], bits_per_axis, w);
  write_tree_node(tree, tree.nodes[node.right], bits_per_axis, w);
}

std::uint32_t read_tree_node(MapTree& tree, std::size_t flat, int bits_per_axis, BitReader& r) {
  const auto id = static_cast<std::uint32_t>(tree.nodes.size());
  tree.nodes.push_back({flat, -1, false, 0, 0});
  const std::size_t shape = tree.index.shape_of(flat);
  if (shape == 0) return id;
  if (r.get_bit()) {
    tree.nodes[id].pruned = true;
    return id;
  }
  const auto axis = static_cast<int>(r.get_bits(bits_per_axis));
  if (static_cast<std::size_t>(axis) >= tree.index.ndim() || !tree.index.shape_divisible(shape, axis))
    throw StreamError("tree splits a block along non-divisible axis " + std::to_string(axis));
  tree.nodes[id].split_axis = axis;
  const auto [l, rr] = tree.index.child_indices(flat, axis);
  const std::uint32_t left = read_tree_node(tree, l, bits_per_axis, r);
  const std::uint32_t right = read_tree_node(tree, rr, bits_per_axis, r);
  tree.nodes[id].left = left;
  tree.nodes[id].right = right;
  return id;
}

void write_header(const StreamHeader& h, ByteWriter& w) {
  for (char ch : kStreamMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(h.version);
  w.u8(static_cast<std::uint8_t>(h.ndim()));
  w.u16(static_cast<std::uint16_t>(h.channels));
  w.u8(static_cast<std::uint8_t>(h.bit_depth));
  for (std::size_t d : h.dims_original) w.u32(static_cast<std::uint32_t>(d));
  for (std::size_t d : h.dims_padded) w.u32(static_cast<std::uint32_t>(d));
  w.f64(h.sigma);
  w.f64(h.q);
  w.f64(h.hp.alpha);
  w.f64(h.hp.beta);
  w.f64(h.hp.c);
  w.f64(h.hp.tau0);
  w.f64(h.hp.eta0);
}

StreamHeader read_header(ByteReader& r) {
  char magic[4];
  for (char& ch : magic) ch = static_cast<char>(r.u8());
  if (std::memcmp(magic, kStreamMagic, 4) != 0) throw StreamError("bad magic, not a CARP stream");
  StreamHeader h;
  h.version = r.u8();
  if (h.version != kStreamVersion) throw StreamError("unsupported stream version " + std::to_string(h.version));
  const std::size_t m = r.u8();
  if (m == 0) throw StreamError("stream declares zero dimensions");
  h.channels = r.u16();
  h.bit_depth = r.u8();
  if (h.channels == 0) throw StreamError("stream declares zero channels");
  if (h.bit_depth != 8 && h.bit_depth != 16) throw StreamError("unsupported bit depth " + std::to_string(h.bit_depth));
  for (std::size_t i = 0; i < m; ++i) h.dims_original.push_back(r.u32());
  for (std::size_t i = 0; i < m; ++i) h.dims_padded.push_back(r.u32());
  for (std::size_t d : h.dims_original)
    if (d == 0) throw StreamError("stream declares an empty axis");
  if (h.dims_padded != padded_dims(h.dims_original)) throw StreamError("padded extents inconsistent with original");
  int levels = 0;
  for (std::size_t d : h.dims_padded) levels += std::countr_zero(d);
  if (levels > 40) throw StreamError("stream declares an oversized image");
  h.sigma = r.f64();
  h.q = r.f64();
  h.hp.sigma = h.sigma;
  h.hp.alpha = r.f64();
  h.hp.beta = r.f64();
  h.hp.c = r.f64();
  h.hp.tau0 = r.f64();
  h.hp.eta0 = r.f64();
  if (!(h.q > 0.0) || !std::isfinite(h.q)) throw StreamError("invalid quantization step");
  return h;
}

}  // namespace

int axis_bits(std::size_t ndim) { return ndim <= 1 ? 0 : std::bit_width(ndim - 1); }

double default_quant_step(double sigma) { return std::max(sigma, 0.5); }

int StreamHeader::scales() const {
  int levels = 0;
  for (std::size_t d : dims_padded) levels += std::countr_zero(d);
  return levels;
}

BitString serialize_tree(const MapTree& tree) {
  BitWriter w;
  write_tree_node(tree, tree.nodes.at(0), axis_bits(tree.index.ndim()), w);
  BitString out;
  out.bit_count = w.bit_count();
  out.bytes = w.take();
  return out;
}

MapTree deserialize_tree(const BitString& bits, const Dims& padded_dims) {
  MapTree tree;
  tree.index = LatticeIndex(padded_dims);
  BitReader r(bits.bytes, bits.bit_count);
  read_tree_node(tree, tree.index.root(), axis_bits(tree.index.ndim()), r);
  if (r.remaining() != 0) throw StreamError("trailing bits after tree");
  return tree;
}

SegmentSymbols tokenize_segment(std::span<const std::int64_t> values, std::size_t min_run) {
  SegmentSymbols out;
  std::size_t i = 0;
  while (i < values.size()) {
    if (values[i] != 0) {
      out.symbols.push_back(values[i++]);
      continue;
    }
    std::size_t run = 0;
    while (i + run < values.size() && values[i + run] == 0) ++run;
    i += run;
    while (run > 0) {
      if (run >= min_run) {
        const std::size_t chunk = std::min(run, kMaxZeroRun);
        out.symbols.push_back(kZeroRun);
        out.run_lengths.push_back(static_cast<std::uint16_t>(chunk));
        run -= chunk;
      } else {
        out.symbols.insert(out.symbols.end(), run, 0);
        run = 0;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_stream(const CompressedStream& s) {
  const std::size_t segments = static_cast<std::size_t>(s.header.scales()) + 1;
  if (s.segments.size() != segments) throw ContractViolation("only complete streams can be encoded");
  ByteWriter w;
  write_header(s.header, w);
  w.u64(s.tree.bit_count);
  w.bytes(s.tree.bytes);
  for (const CodeTable& t : s.tables) t.write(w);
  for (const auto& seg : s.segments)
    for (const auto& ch : seg) w.u32(static_cast<std::uint32_t>(ch.size()));
  for (const auto& seg : s.segments)
    for (const auto& ch : seg) w.bytes(ch);
  return std::move(w.buffer());
}

CompressedStream decode_stream(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  CompressedStream s;
  s.header = read_header(r);
  const std::uint64_t tree_bits = r.u64();
  if (tree_bits / 8 > r.remaining()) throw StreamError("tree exceeds stream");
  const auto tree_bytes = r.bytes((tree_bits + 7) / 8);
  s.tree.bit_count = tree_bits;
  s.tree.bytes.assign(tree_bytes.begin(), tree_bytes.end());
  for (int c = 0; c < s.header.channels; ++c) s.tables.push_back(CodeTable::read(r));

  const std::size_t segments = static_cast<std::size_t>(s.header.scales()) + 1;
  const auto channels = static_cast<std::size_t>(s.header.channels);
  std::vector<std::size_t> lengths(segments * channels);
  for (std::size_t& len : lengths) len = r.u32();

  for (std::size_t seg = 0; seg < segments; ++seg) {
    std::size_t need = 0;
    for (std::size_t c = 0; c < channels; ++c) need += lengths[seg * channels + c];
    if (r.remaining() == 0 && seg > 0) break;
    if (r.remaining() < need)
      throw StreamError("stream truncated inside segment " + std::to_string(seg) + " (not at a scale boundary)");
    auto& out = s.segments.emplace_back();
    for (std::size_t c = 0; c < channels; ++c) {
      const auto b = r.bytes(lengths[seg * channels + c]);
      out.emplace_back(b.begin(), b.end());
    }
  }
  if (r.remaining() != 0) throw StreamError("trailing bytes after payload");
  return s;
}

std::vector<std::size_t> segment_boundaries(const CompressedStream& stream) {
  ByteWriter w;
  write_header(stream.header, w);
  w.u64(stream.tree.bit_count);
  w.bytes(stream.tree.bytes);
  for (const CodeTable& t : stream.tables) t.write(w);
  const std::size_t segments = static_cast<std::size_t>(stream.header.scales()) + 1;
  std::size_t pos = w.size() + 4 * segments * static_cast<std::size_t>(stream.header.channels);
  std::vector<std::size_t> out;
  for (const auto& seg : stream.segments) {
    for (const auto& ch : seg) pos += ch.size();
    out.push_back(pos);
  }
  return out;
}

CompressedStream compress(const PixelGrid& grid, const Hyperparams& hp_in, double q, CompressStats* stats,
                          const CompressOptions& options) {
  if (!(q > 0.0) || !std::isfinite(q)) throw ContractViolation("quantization step must be positive");
  if (grid.channels < 1 || grid.channels > 65535) throw ContractViolation("channel count out of range");
  if (grid.bit_depth != 8 && grid.bit_depth != 16) throw ContractViolation("bit depth must be 8 or 16");
  if (grid.ndim() == 0 || grid.ndim() > 255) throw ContractViolation("dimension count out of range");
  const Hyperparams hp = hp_in.validated();
  const PixelGrid padded = grid.is_padded() ? grid : pad(grid);

  auto t0 = Clock::now();
  auto lattice = build_stats(padded, options.memory_budget);
  const double stats_ms = elapsed_ms(t0);
  t0 = Clock::now();
  const PosteriorLattice posterior = build_posterior(lattice, hp);
  const double posterior_ms = elapsed_ms(t0);
  t0 = Clock::now();
  const MapTree tree = extract_map_tree(posterior);
  const Permutation perm = permutation_from_tree(tree);
  const std::vector<LeafRun> runs = leaf_runs(tree);
  const double tree_ms = elapsed_ms(t0);
  t0 = Clock::now();

  CompressedStream out;
  out.header.dims_original = grid.dims_original;
  out.header.dims_padded = padded.dims;
  out.header.bit_depth = grid.bit_depth;
  out.header.channels = grid.channels;
  out.header.sigma = hp.sigma;
  out.header.q = q;
  out.header.hp = hp;
  out.tree = serialize_tree(tree);
  out.segments.resize(static_cast<std::size_t>(lattice->index().total_levels()) + 1);

  const std::size_t n = padded.plane_size();
  std::vector<double> v(n);
  for (int c = 0; c < grid.channels; ++c) {
    const double* plane = padded.plane(c);
    for (std::size_t i = 0; i < n; ++i) v[i] = plane[perm.order[i]];
    for (const LeafRun& run : runs) {
      if (!run.pruned) continue;
      const auto first = v.begin() + static_cast<std::ptrdiff_t>(run.start);
      const auto last = first + static_cast<std::ptrdiff_t>(run.length);
      const double mean = std::accumulate(first, last, 0.0) / static_cast<double>(run.length);
      std::fill(first, last, mean);
    }
    ChannelCode code = encode_channel(quantize(haar_forward(v), q));
    out.tables.push_back(std::move(code.table));
    for (std::size_t s = 0; s < code.segments.size(); ++s) out.segments[s].push_back(std::move(code.segments[s]));
  }

  if (stats) {
    stats->tree_nodes = tree.nodes.size();
    stats->tree_leaves = tree.leaf_count();
    stats->pruned_leaves = tree.pruned_count();
    stats->pruned_pixels = tree.pruned_pixels();
    stats->log_marginal = posterior.log_marginal();
    stats->stats_ms = stats_ms;
    stats->posterior_ms = posterior_ms;
    stats->tree_ms = tree_ms;
    stats->coding_ms = elapsed_ms(t0);
  }
  return out;
}

PixelGrid decompress(const CompressedStream& stream, std::optional<int> prefix_scales) {
  const StreamHeader& h = stream.header;
  const int total = h.scales();
  if (prefix_scales && (*prefix_scales < 0 || *prefix_scales > total))
    throw ContractViolation("prefix scales must lie in [0, " + std::to_string(total) + "]");
  if (stream.segments.empty()) throw StreamError("stream lacks the scaling segment");
  if (stream.tables.size() != static_cast<std::size_t>(h.channels)) throw StreamError("code table count mismatch");
  const int scales = std::min(prefix_scales.value_or(total), stream.available_scales());

  const MapTree tree = deserialize_tree(stream.tree, h.dims_padded);
  const Permutation perm = permutation_from_tree(tree);
  PixelGrid padded = PixelGrid::zeros(h.dims_padded, h.bit_depth, h.channels);
  padded.dims_original = h.dims_original;
  const std::size_t n = padded.plane_size();

  for (int c = 0; c < h.channels; ++c) {
    QuantizedPyramid symbols;
    symbols.details.resize(static_cast<std::size_t>(total));
    for (int j = 0; j < total; ++j) symbols.details[j].assign(std::size_t{1} << j, 0);
    const CodeTable& table = stream.tables[c];
    if (stream.segments[0].size() != static_cast<std::size_t>(h.channels))
      throw StreamError("segment 0 channel count mismatch");
    symbols.scaling = decode_segment(stream.segments[0][c], table, 1)[0];
    for (int j = 0; j < scales; ++j) {
      const auto& seg = stream.segments[static_cast<std::size_t>(j) + 1];
      if (seg.size() != static_cast<std::size_t>(h.channels)) throw StreamError("segment channel count mismatch");
      symbols.details[j] = decode_segment(seg[c], table, std::size_t{1} << j);
    }
    const std::vector<double> v = haar_inverse(dequantize(symbols, h.q));
    double* plane = padded.plane(c);
    for (std::size_t i = 0; i < n; ++i) plane[perm.order[i]] = v[i];
  }
  PixelGrid out = crop(padded, h.dims_original);
  return to_integer_range(std::move(out));
}

PixelGrid decompress(std::span<const std::uint8_t> bytes, std::optional<int> prefix_scales) {
  return decompress(decode_stream(bytes), prefix_scales);
}

std::size_t raw_size_bytes(const PixelGrid& grid) {
  std::size_t n = 1;
  for (std::size_t d : grid.dims_original) n *= d;
  return n * static_cast<std::size_t>(grid.channels) * (grid.bit_depth == 8 ? 1 : 2);
}

std::size_t raw_size_bytes(const StreamHeader& h) {
  std::size_t n = 1;
  for (std::size_t d : h.dims_original) n *= d;
  return n * static_cast<std::size_t>(h.channels) * (h.bit_depth == 8 ? 1 : 2);
}

double compression_ratio(const StreamHeader& header, std::size_t stream_bytes) {
  return static_cast<double>(raw_size_bytes(header)) / static_cast<double>(stream_bytes);
}

RatioSearchResult target_ratio_search(const PixelGrid& grid, const Hyperparams& hp_base, double target_ratio,
                                      double tol, const CompressOptions& options) {
  if (!(target_ratio > 1.0)) throw RangeError("target ratio must exceed 1 for lossy coding");
  if (!(tol > 0.0)) throw ContractViolation("ratio tolerance must be positive");
  constexpr int kMaxEvaluations = 30;
  constexpr double kMinSigma = 0.01;
  const double max_sigma = 16.0 * (std::ldexp(1.0, grid.bit_depth) - 1.0);
  const PixelGrid padded = grid.is_padded() ? grid : pad(grid);

  RatioSearchResult best;
  double best_miss = std::numeric_limits<double>::infinity();
  auto evaluate = [&](double sigma) {
    const double q = default_quant_step(sigma);
    CompressedStream stream = compress(padded, hp_base.with_sigma(sigma), q, nullptr, options);
    const std::size_t bytes = encode_stream(stream).size();
    const double ratio = compression_ratio(stream.header, bytes);
    ++best.evaluations;
    const double miss = std::abs(std::log(ratio / target_ratio));
    if (miss < best_miss) {
      best_miss = miss;
      best.sigma = sigma;
      best.q = q;
      best.ratio = ratio;
      best.stream = std::move(stream);
      best.stream_bytes = bytes;
    }
    return ratio;
  };
  auto within = [&](double ratio) { return std::abs(ratio - target_ratio) <= tol * target_ratio; };
  auto finish = [&](bool converged, const std::string& why) {
    best.converged = converged;
    if (!converged) warn("ratio search: " + why);
    return std::move(best);
  };

  double lo = kMinSigma;
  double r_lo = evaluate(lo);
  if (within(r_lo)) return finish(true, "");
  if (r_lo > target_ratio) return finish(false, "target exceeded already at minimal sigma");

  double hi = 1.0;
  double r_hi = evaluate(hi);
  while (r_hi < target_ratio && !within(r_hi)) {
    if (hi >= max_sigma || best.evaluations >= kMaxEvaluations)
      return finish(false, "target ratio not reached up to sigma " + std::to_string(hi));
    lo = hi;
    hi *= 2.0;
    r_hi = evaluate(hi);
  }
  if (within(r_hi)) return finish(true, "");

  while (best.evaluations < kMaxEvaluations) {
    const double mid = std::sqrt(lo * hi);
    const double r = evaluate(mid);
    if (within(r)) return finish(true, "");
    (r < target_ratio ? lo : hi) = mid;
  }
  return finish(false, "no sigma within tolerance after " + std::to_string(kMaxEvaluations) + " compressions");
}

}  // namespace carp

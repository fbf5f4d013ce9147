#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "carp/grid.hpp"

namespace carp {

// A dyadic sub-rectangle of the padded pixel space. Every offset is a
// multiple of the matching extent, and every extent is a power of two.
struct Block {
  Dims offset;
  Dims extent;

  std::size_t size() const;
  bool is_atomic() const;
  friend bool operator==(const Block&, const Block&) = default;
};

struct BlockStats {
  double sum = 0.0;  // sum of intensities y(A)
  double sst = 0.0;  // corrected sum of squares
  std::size_t size = 0;
};

// Axes along which `block` can still be halved (extent > 1).
std::vector<int> divisible_dims(const Block& block);

// Lower-coordinate half first. Throws ContractViolation if `axis` is not
// divisible.
std::pair<Block, Block> children(const Block& block, int axis);

// (sum_left - sum_right) / sqrt(|A|).
double haar_coefficient(const Block& block, int axis, const BlockStats& left, const BlockStats& right);

// Addressing for the set of every block reachable by some recursive dyadic
// partition of a 2^J_0 x ... x 2^J_{m-1} space.
//
// Blocks are grouped by shape (the vector of log2 extents). Shapes are
// numbered in mixed radix with the last axis fastest, so halving any axis
// strictly lowers the shape number; iterating shapes in increasing order
// therefore visits children before parents. Within a shape, blocks are
// numbered row-major by block coordinate. Each shape occupies one contiguous
// run of the flat node numbering.
class LatticeIndex {
 public:
  LatticeIndex() = default;
  explicit LatticeIndex(const Dims& padded_dims);

  std::size_t ndim() const { return log_dims_.size(); }
  int total_levels() const { return total_levels_; }  // J = sum of J_i
  const std::vector<int>& log_dims() const { return log_dims_; }
  Dims dims() const;
  std::size_t pixel_count() const { return std::size_t{1} << total_levels_; }

  std::size_t shape_count() const { return shape_first_.size(); }
  std::size_t node_count() const { return node_count_; }
  std::size_t root() const { return node_count_ - 1; }

  const std::vector<int>& shape_log_extent(std::size_t shape) const { return shape_log_extent_[shape]; }
  std::size_t shape_first(std::size_t shape) const { return shape_first_[shape]; }
  std::size_t shape_blocks(std::size_t shape) const { return shape_blocks_[shape]; }
  int shape_level(std::size_t shape) const { return shape_level_[shape]; }
  std::size_t shape_block_size(std::size_t shape) const {
    return std::size_t{1} << (total_levels_ - shape_level_[shape]);
  }
  bool shape_divisible(std::size_t shape, int axis) const { return shape_log_extent_[shape][axis] > 0; }
  int shape_divisible_count(std::size_t shape) const;
  std::size_t shape_of(std::size_t flat) const;

  // Halving along `axis` lowers the shape number by this stride.
  std::size_t shape_stride(int axis) const { return shape_stride_[axis]; }

  std::size_t flat_index(const Block& block) const;
  Block block(std::size_t flat) const;
  std::pair<std::size_t, std::size_t> child_indices(std::size_t flat, int axis) const;

  // Calls fn(parent, left, right) with flat indices for every block of
  // `shape` split along `axis`, in increasing parent order.
  template <typename Fn>
  void for_each_split(std::size_t shape, int axis, Fn&& fn) const {
    const std::size_t child_shape = shape - shape_stride_[axis];
    const auto& counts = shape_counts_[shape];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < counts.size(); ++i) inner *= counts[i];
    const std::size_t along = counts[axis];
    const std::size_t outer = shape_blocks_[shape] / (inner * along);
    std::size_t parent = shape_first_[shape];
    const std::size_t child_base = shape_first_[child_shape];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < along; ++k) {
        const std::size_t left0 = child_base + (o * 2 * along + 2 * k) * inner;
        for (std::size_t in = 0; in < inner; ++in) fn(parent++, left0 + in, left0 + inner + in);
      }
    }
  }

 private:
  std::vector<int> log_dims_;
  int total_levels_ = 0;
  std::vector<std::size_t> shape_stride_;
  std::vector<std::vector<int>> shape_log_extent_;
  std::vector<std::vector<std::size_t>> shape_counts_;
  std::vector<std::size_t> shape_first_;
  std::vector<std::size_t> shape_blocks_;
  std::vector<int> shape_level_;
  std::size_t node_count_ = 0;
};

// prod_i (2^(J_i + 1) - 1).
std::size_t lattice_node_count(const Dims& padded_dims);

// Bytes held per block by statistics plus posterior tables.
inline constexpr std::size_t kLatticeBytesPerNode = 4 * sizeof(double);
inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{6} << 30;

// Sums and corrected sums of squares for every lattice block.
class BlockStatsLattice {
 public:
  BlockStatsLattice(LatticeIndex index, std::vector<double> sum, std::vector<double> sst)
      : index_(std::move(index)), sum_(std::move(sum)), sst_(std::move(sst)) {}

  const LatticeIndex& index() const { return index_; }
  BlockStats at(const Block& block) const { return at(index_.flat_index(block)); }
  BlockStats at(std::size_t flat) const {
    return {sum_[flat], sst_[flat], index_.shape_block_size(index_.shape_of(flat))};
  }
  double sum(std::size_t flat) const { return sum_[flat]; }
  double sst(std::size_t flat) const { return sst_[flat]; }

 private:
  LatticeIndex index_;
  std::vector<double> sum_;
  std::vector<double> sst_;
};

// Bottom-up over the block DAG from the atomic level. Multi-channel grids use
// the per-pixel channel mean. The grid must be padded.
std::shared_ptr<const BlockStatsLattice> build_stats(const PixelGrid& grid,
                                                     std::size_t memory_budget = kDefaultMemoryBudget);

}  // namespace carp

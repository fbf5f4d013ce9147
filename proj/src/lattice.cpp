#include "carp/lattice.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "carp/error.hpp"

namespace carp {

std::size_t Block::size() const {
  std::size_t s = 1;
  for (std::size_t e : extent) s *= e;
  return s;
}

bool Block::is_atomic() const {
  return std::all_of(extent.begin(), extent.end(), [](std::size_t e) { return e == 1; });
}

std::vector<int> divisible_dims(const Block& block) {
  std::vector<int> axes;
  for (std::size_t i = 0; i < block.extent.size(); ++i)
    if (block.extent[i] > 1) axes.push_back(static_cast<int>(i));
  return axes;
}

std::pair<Block, Block> children(const Block& block, int axis) {
  if (axis < 0 || static_cast<std::size_t>(axis) >= block.extent.size() || block.extent[axis] < 2)
    throw ContractViolation("axis " + std::to_string(axis) + " is not divisible for block of extent " +
                            dims_to_string(block.extent));
  Block left = block;
  left.extent[axis] /= 2;
  Block right = left;
  right.offset[axis] += left.extent[axis];
  return {std::move(left), std::move(right)};
}

double haar_coefficient(const Block& block, int axis, const BlockStats& left, const BlockStats& right) {
  if (axis < 0 || static_cast<std::size_t>(axis) >= block.extent.size() || block.extent[axis] < 2)
    throw ContractViolation("haar_coefficient on non-divisible axis " + std::to_string(axis));
  return (left.sum - right.sum) / std::sqrt(static_cast<double>(block.size()));
}

LatticeIndex::LatticeIndex(const Dims& padded_dims) {
  if (padded_dims.empty()) throw DimensionError("lattice needs at least one axis");
  const std::size_t m = padded_dims.size();
  log_dims_.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (padded_dims[i] == 0 || !std::has_single_bit(padded_dims[i]))
      throw DimensionError("lattice extent " + std::to_string(padded_dims[i]) + " is not a power of two");
    log_dims_[i] = std::countr_zero(padded_dims[i]);
    total_levels_ += log_dims_[i];
  }
  if (total_levels_ > 40) throw ResourceError("lattice with 2^" + std::to_string(total_levels_) + " pixels");

  shape_stride_.assign(m, 1);
  for (std::size_t i = m; i-- > 1;) shape_stride_[i - 1] = shape_stride_[i] * (log_dims_[i] + 1);
  const std::size_t shapes = shape_stride_[0] * (log_dims_[0] + 1);

  shape_log_extent_.resize(shapes);
  shape_counts_.resize(shapes);
  shape_first_.resize(shapes);
  shape_blocks_.resize(shapes);
  shape_level_.resize(shapes);
  std::size_t next = 0;
  for (std::size_t s = 0; s < shapes; ++s) {
    std::vector<int> a(m);
    std::vector<std::size_t> counts(m);
    std::size_t rem = s;
    int sum_a = 0;
    std::size_t blocks = 1;
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = static_cast<int>(rem / shape_stride_[i]);
      rem %= shape_stride_[i];
      counts[i] = std::size_t{1} << (log_dims_[i] - a[i]);
      blocks *= counts[i];
      sum_a += a[i];
    }
    shape_log_extent_[s] = std::move(a);
    shape_counts_[s] = std::move(counts);
    shape_first_[s] = next;
    shape_blocks_[s] = blocks;
    shape_level_[s] = total_levels_ - sum_a;
    next += blocks;
  }
  node_count_ = next;
}

Dims LatticeIndex::dims() const {
  Dims d(log_dims_.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::size_t{1} << log_dims_[i];
  return d;
}

int LatticeIndex::shape_divisible_count(std::size_t shape) const {
  const auto& a = shape_log_extent_[shape];
  return static_cast<int>(std::count_if(a.begin(), a.end(), [](int v) { return v > 0; }));
}

std::size_t LatticeIndex::shape_of(std::size_t flat) const {
  const auto it = std::upper_bound(shape_first_.begin(), shape_first_.end(), flat);
  return static_cast<std::size_t>(it - shape_first_.begin()) - 1;
}

std::size_t LatticeIndex::flat_index(const Block& block) const {
  const std::size_t m = ndim();
  if (block.offset.size() != m || block.extent.size() != m)
    throw ContractViolation("block rank does not match lattice rank");
  std::size_t shape = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t e = block.extent[i];
    if (e == 0 || !std::has_single_bit(e) || std::countr_zero(e) > log_dims_[i] || block.offset[i] % e != 0 ||
        block.offset[i] + e > (std::size_t{1} << log_dims_[i]))
      throw ContractViolation("block " + dims_to_string(block.offset, ',') + " + " + dims_to_string(block.extent) +
                              " is not a dyadic block of the lattice");
    shape += static_cast<std::size_t>(std::countr_zero(e)) * shape_stride_[i];
  }
  const auto& counts = shape_counts_[shape];
  std::size_t local = 0;
  for (std::size_t i = 0; i < m; ++i) local = local * counts[i] + block.offset[i] / block.extent[i];
  return shape_first_[shape] + local;
}

Block LatticeIndex::block(std::size_t flat) const {
  const std::size_t shape = shape_of(flat);
  const std::size_t m = ndim();
  Block b;
  b.offset.resize(m);
  b.extent.resize(m);
  std::size_t local = flat - shape_first_[shape];
  for (std::size_t i = m; i-- > 0;) {
    const std::size_t c = shape_counts_[shape][i];
    b.extent[i] = std::size_t{1} << shape_log_extent_[shape][i];
    b.offset[i] = (local % c) * b.extent[i];
    local /= c;
  }
  return b;
}

std::pair<std::size_t, std::size_t> LatticeIndex::child_indices(std::size_t flat, int axis) const {
  const std::size_t shape = shape_of(flat);
  if (axis < 0 || static_cast<std::size_t>(axis) >= ndim() || !shape_divisible(shape, axis))
    throw ContractViolation("axis " + std::to_string(axis) + " is not divisible");
  const auto& counts = shape_counts_[shape];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < counts.size(); ++i) inner *= counts[i];
  const std::size_t along = counts[axis];
  const std::size_t local = flat - shape_first_[shape];
  const std::size_t in = local % inner;
  const std::size_t k = (local / inner) % along;
  const std::size_t o = local / (inner * along);
  const std::size_t left = shape_first_[shape - shape_stride_[axis]] + (o * 2 * along + 2 * k) * inner + in;
  return {left, left + inner};
}

std::size_t lattice_node_count(const Dims& padded_dims) {
  std::size_t n = 1;
  for (std::size_t d : padded_dims) n *= 2 * d - 1;
  return n;
}

std::shared_ptr<const BlockStatsLattice> build_stats(const PixelGrid& grid, std::size_t memory_budget) {
  if (!grid.is_padded())
    throw ContractViolation("build_stats needs a padded grid, got " + dims_to_string(grid.dims));
  const std::size_t nodes = lattice_node_count(grid.dims);
  const std::size_t bytes = nodes * kLatticeBytesPerNode;
  if (bytes / kLatticeBytesPerNode != nodes || bytes > memory_budget)
    throw ResourceError("block lattice for " + dims_to_string(grid.dims) + " needs " + std::to_string(nodes) +
                        " nodes (~" + std::to_string(bytes >> 20) + " MiB), budget is " +
                        std::to_string(memory_budget >> 20) + " MiB");

  LatticeIndex index(grid.dims);
  std::vector<double> sum(index.node_count());
  std::vector<double> sst(index.node_count(), 0.0);
  if (grid.channels == 1) {
    std::copy(grid.values.begin(), grid.values.begin() + grid.plane_size(), sum.begin());
  } else {
    const PixelGrid mean = channel_mean(grid);
    std::copy(mean.values.begin(), mean.values.end(), sum.begin());
  }

  for (std::size_t s = 1; s < index.shape_count(); ++s) {
    int axis = 0;
    while (!index.shape_divisible(s, axis)) ++axis;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(index.shape_block_size(s)));
    index.for_each_split(s, axis, [&](std::size_t p, std::size_t l, std::size_t r) {
      sum[p] = sum[l] + sum[r];
      const double w = (sum[l] - sum[r]) * inv_sqrt;
      sst[p] = sst[l] + sst[r] + w * w;
    });
  }
  return std::make_shared<const BlockStatsLattice>(std::move(index), std::move(sum), std::move(sst));
}

}  // namespace carp

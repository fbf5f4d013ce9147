#include "carp/map_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "carp/error.hpp"

namespace carp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct BestSplit {
  int axis = -1;
  double log_term = kNegInf;  // log of (1 - prune_post) split_post kappa_l kappa_r
};

BestSplit best_split(const PosteriorLattice& posterior, const std::vector<double>& log_kappa, std::size_t flat) {
  const LatticeIndex& idx = posterior.index();
  const std::size_t shape = idx.shape_of(flat);
  BestSplit best;
  for (int d = 0; d < static_cast<int>(idx.ndim()); ++d) {
    if (!idx.shape_divisible(shape, d)) continue;
    const auto [l, r] = idx.child_indices(flat, d);
    const double term = posterior.log_split_joint(flat, d) + log_kappa[l] + log_kappa[r];
    if (best.axis < 0 || term > best.log_term) best = {d, term};
  }
  return best;
}

std::uint32_t build_subtree(const PosteriorLattice& posterior, const KappaTable& kappa, std::size_t flat,
                            std::vector<TreeNode>& nodes) {
  const auto id = static_cast<std::uint32_t>(nodes.size());
  nodes.push_back({flat, -1, false, 0, 0});
  if (posterior.index().shape_of(flat) == 0) return id;
  const BestSplit split = best_split(posterior, kappa.log_kappa, flat);
  if (posterior.log_prune_post(flat) > split.log_term) {
    nodes[id].pruned = true;
    return id;
  }
  const auto [l, r] = posterior.index().child_indices(flat, split.axis);
  nodes[id].split_axis = split.axis;
  const std::uint32_t left = build_subtree(posterior, kappa, l, nodes);
  const std::uint32_t right = build_subtree(posterior, kappa, r, nodes);
  nodes[id].left = left;
  nodes[id].right = right;
  return id;
}

// Row-major pixel indices of `block` within a padded grid of extents `dims`.
void append_block_pixels(const Block& block, const Dims& dims, std::vector<std::size_t>& out) {
  const std::size_t m = dims.size();
  std::vector<std::size_t> strides(m, 1);
  for (std::size_t i = m; i-- > 1;) strides[i - 1] = strides[i] * dims[i];
  const std::size_t last = m - 1;
  std::vector<std::size_t> idx(m, 0);
  std::size_t base = 0;
  for (std::size_t i = 0; i < m; ++i) base += block.offset[i] * strides[i];
  const std::size_t rows = block.size() / block.extent[last];
  for (std::size_t row = 0; row < rows; ++row) {
    std::size_t start = base;
    for (std::size_t i = 0; i < last; ++i) start += idx[i] * strides[i];
    for (std::size_t t = 0; t < block.extent[last]; ++t) out.push_back(start + t);
    for (std::size_t i = last; i-- > 0;) {
      if (++idx[i] < block.extent[i]) break;
      idx[i] = 0;
    }
  }
}

}  // namespace

double KappaTable::kappa(std::size_t flat) const { return std::exp(log_kappa[flat]); }

KappaTable compute_kappa(const PosteriorLattice& posterior) {
  const LatticeIndex& idx = posterior.index();
  KappaTable table;
  table.log_kappa.assign(idx.node_count(), 0.0);
  for (std::size_t s = 1; s < idx.shape_count(); ++s) {
    const std::size_t first = idx.shape_first(s);
    for (std::size_t k = first; k < first + idx.shape_blocks(s); ++k) {
      const BestSplit split = best_split(posterior, table.log_kappa, k);
      table.log_kappa[k] = std::min(0.0, std::max(posterior.log_prune_post(k), split.log_term));
    }
  }
  return table;
}

MapTree extract_map_tree(const PosteriorLattice& posterior, const KappaTable& kappa) {
  MapTree tree;
  tree.index = posterior.index();
  tree.nodes.reserve(1024);
  build_subtree(posterior, kappa, tree.index.root(), tree.nodes);
  return tree;
}

MapTree extract_map_tree(const PosteriorLattice& posterior) {
  return extract_map_tree(posterior, compute_kappa(posterior));
}

std::size_t MapTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t MapTree::pruned_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.pruned; }));
}

std::size_t MapTree::pruned_pixels() const {
  std::size_t total = 0;
  for (const TreeNode& n : nodes)
    if (n.pruned) total += index.shape_block_size(index.shape_of(n.block));
  return total;
}

std::vector<Block> MapTree::leaf_blocks() const {
  std::vector<Block> out;
  for (const TreeNode& n : nodes)
    if (n.is_leaf()) out.push_back(index.block(n.block));
  return out;
}

void MapTree::validate() const {
  if (nodes.empty() || nodes[0].block != index.root()) throw ContractViolation("tree root is not the full space");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    const std::size_t shape = index.shape_of(n.block);
    if (n.is_leaf()) {
      if (!n.pruned && shape != 0)
        throw ContractViolation("leaf " + std::to_string(i) + " is neither atomic nor pruned");
      if (n.pruned && shape == 0) throw ContractViolation("atomic node " + std::to_string(i) + " marked pruned");
      covered += index.shape_block_size(shape);
      continue;
    }
    if (n.pruned) throw ContractViolation("pruned node " + std::to_string(i) + " has children");
    if (n.left >= nodes.size() || n.right >= nodes.size() || n.left <= i || n.right <= i)
      throw ContractViolation("node " + std::to_string(i) + " has invalid child links");
    const auto [l, r] = index.child_indices(n.block, n.split_axis);
    if (nodes[n.left].block != l || nodes[n.right].block != r)
      throw ContractViolation("children of node " + std::to_string(i) + " do not halve it");
  }
  if (covered != index.pixel_count()) throw ContractViolation("leaves do not tile the pixel space");
}

double tree_log_posterior(const MapTree& tree, const PosteriorLattice& posterior) {
  double total = 0.0;
  for (const TreeNode& n : tree.nodes) {
    if (n.pruned) {
      total += posterior.log_prune_post(n.block);
    } else if (!n.is_leaf()) {
      total += posterior.log_split_joint(n.block, n.split_axis);
    }
  }
  return total;
}

std::vector<LeafRun> leaf_runs(const MapTree& tree) {
  std::vector<LeafRun> runs;
  std::size_t pos = 0;
  // Preorder with left before right is already depth-first permuted order.
  for (const TreeNode& n : tree.nodes) {
    if (!n.is_leaf()) continue;
    const std::size_t len = tree.index.shape_block_size(tree.index.shape_of(n.block));
    runs.push_back({pos, len, n.pruned, n.block});
    pos += len;
  }
  return runs;
}

Permutation permutation_from_tree(const MapTree& tree) {
  Permutation perm;
  const Dims dims = tree.index.dims();
  perm.order.reserve(tree.index.pixel_count());
  for (const TreeNode& n : tree.nodes) {
    if (!n.is_leaf()) continue;
    if (n.pruned) {
      append_block_pixels(tree.index.block(n.block), dims, perm.order);
    } else {
      perm.order.push_back(n.block);  // atomic flat index is the pixel index
    }
  }
  if (perm.order.size() != tree.index.pixel_count())
    throw ContractViolation("tree leaves cover " + std::to_string(perm.order.size()) + " of " +
                            std::to_string(tree.index.pixel_count()) + " pixels");
  perm.inverse.assign(perm.order.size(), 0);
  for (std::size_t i = 0; i < perm.order.size(); ++i) perm.inverse[perm.order[i]] = i;
  return perm;
}

}  // namespace carp

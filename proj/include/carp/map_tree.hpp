#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "carp/bayes.hpp"
#include "carp/lattice.hpp"

namespace carp {

// log kappa per lattice block: the log posterior probability of the best
// pruned partition rooted at the block.
struct KappaTable {
  std::vector<double> log_kappa;

  double kappa(std::size_t flat) const;
};

KappaTable compute_kappa(const PosteriorLattice& posterior);

struct TreeNode {
  std::size_t block = 0;  // flat lattice index
  int split_axis = -1;    // -1 for leaves
  bool pruned = false;
  std::uint32_t left = 0;  // node indices, valid when split_axis >= 0
  std::uint32_t right = 0;

  bool is_leaf() const { return split_axis < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// A partition tree in preorder (node 0 is the root). Leaves are atomic
// blocks or maximal pruned blocks.
struct MapTree {
  LatticeIndex index;
  std::vector<TreeNode> nodes;

  std::size_t leaf_count() const;
  std::size_t pruned_count() const;
  std::size_t pruned_pixels() const;
  std::vector<Block> leaf_blocks() const;

  // Throws ContractViolation when children do not match their parent's
  // split or leaves are neither atomic nor pruned.
  void validate() const;

  friend bool operator==(const MapTree& a, const MapTree& b) {
    return a.index.dims() == b.index.dims() && a.nodes == b.nodes;
  }
};

// Top-down from the root: pick the axis maximizing the split term (lowest axis
// on ties) and prune only when the prune term is strictly larger.
MapTree extract_map_tree(const PosteriorLattice& posterior, const KappaTable& kappa);
MapTree extract_map_tree(const PosteriorLattice& posterior);

// Sum over the tree of log prune or log split posterior factors.
double tree_log_posterior(const MapTree& tree, const PosteriorLattice& posterior);

// A leaf's dyadic interval in permuted order.
struct LeafRun {
  std::size_t start = 0;
  std::size_t length = 0;
  bool pruned = false;
  std::size_t block = 0;
};

struct Permutation {
  std::vector<std::size_t> order;    // order[i] = padded row-major pixel index at position i
  std::vector<std::size_t> inverse;  // inverse[order[i]] = i
};

// Depth first, left child first. Pixels inside a leaf block follow row-major
// order within the block.
Permutation permutation_from_tree(const MapTree& tree);

// Leaves in permuted order.
std::vector<LeafRun> leaf_runs(const MapTree& tree);

}  // namespace carp

#pragma once

#include <cstdint>
#include <vector>

#include "refine/geometry.hpp"
#include "refine/networks.hpp"
#include "refine/tensor.hpp"

namespace refine {

/// Latents of one level; `latents` row r belongs to `codes[r]` (sorted).
struct LatentLevel {
  std::vector<std::uint64_t> codes;
  Tensorf latents;
  /// Predicted occupancy per cell (inference only; empty in training).
  std::vector<float> occupancy;

  std::size_t size() const { return codes.size(); }
  /// Row of `code`, or -1.
  std::ptrdiff_t find(std::uint64_t code) const;
};

/// Expanded representation of one object: levels 0..M of Morton-keyed latents.
struct LatentOctree {
  std::vector<LatentLevel> levels;
  /// Every child at level 1 was pruned.
  bool degenerate = false;

  int max_lod() const { return static_cast<int>(levels.size()) - 1; }
  int latent_dim() const { return static_cast<int>(levels.front().latents.cols()); }
  std::size_t total_cells() const;
  /// Occupied cells as a SparseOctree.
  SparseOctree structure() const;
};

/// Breadth-first expansion from `root` (1 x D), pruning children whose
/// predicted occupancy is not above 0.5 together with their subtrees.
LatentOctree expand_inference(const RefineNetworks& nets, const MatrixXf& root, int max_lod);

struct TrainingExpansion {
  LatentOctree tree;
  /// Occupancy logits of every visited child, in visiting order.
  Tensorf logits;
  /// Ground-truth occupancy (0/1) aligned with `logits`.
  MatrixXf targets;
};

/// Expansion gated by the ground-truth octree: every child of a GT-occupied
/// parent is visited and scored, only GT-occupied children are expanded.
TrainingExpansion expand_training(Tapef& tape, const RefineNetworks& nets, const Tensorf& root,
                                  const SparseOctree& gt, int max_lod);

}  // namespace refine

#pragma once

// Multiscale latent assembly for a batch of query points.
//
// At each level 1..M the latent at x is the trilinear blend of the latents at
// the 8 surrounding cell centers. Centers that are not stored contribute a
// zero latent and keep their weight (no renormalization). Level 0 does not
// take part. The per-level latents are then summed (D wide) or concatenated
// in level order (D * M wide).

#include <cstdint>
#include <span>
#include <vector>

#include "refine/expansion.hpp"
#include "refine/model_config.hpp"
#include "refine/tensor.hpp"

namespace refine {

struct LevelInterpolation {
  Tensorf latents;  // [N x D]
  /// 1 where none of the 8 surrounding centers is stored.
  std::vector<std::uint8_t> out_of_field;
};

/// Differentiable in the stored latents and, when `coords` requires grad, in
/// the query coordinates.
LevelInterpolation interpolate_lod(Tapef& tape, const LatentOctree& tree, int lod, const Tensorf& coords);

/// Sums or concatenates per-level latents.
Tensorf fuse(Tapef& tape, std::span<const Tensorf> per_lod, FusionKind kind);

inline int fused_width(int latent_dim, int max_lod, FusionKind kind) {
  return kind == FusionKind::Sum ? latent_dim : latent_dim * max_lod;
}

struct FusedLatents {
  Tensorf fused;  // [N x fused width]
  /// 1 where some level had no stored neighbour at all.
  std::vector<std::uint8_t> out_of_field;
};

/// interpolate_lod over levels 1..M followed by fuse.
FusedLatents fuse_query(Tapef& tape, const LatentOctree& tree, const Tensorf& coords, FusionKind kind);

}  // namespace refine

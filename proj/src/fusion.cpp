#include "refine/fusion.hpp"

#include <array>

namespace refine {
namespace {

struct SiteRef {
  std::int32_t row;  // -1 for a missing center
  float weight;
  Eigen::Vector3f weight_gradient;
};

}  // namespace

LevelInterpolation interpolate_lod(Tapef& tape, const LatentOctree& tree, int lod, const Tensorf& coords) {
  if (lod < 1 || lod > tree.max_lod()) throw DomainError("interpolate_lod: lod outside [1, M]");
  if (coords.cols() != 3) throw DomainError("interpolate_lod: coordinates must be N x 3");
  const auto& level = tree.levels[static_cast<std::size_t>(lod)];
  const Eigen::Index n = coords.rows();
  const Eigen::Index d = tree.latent_dim();
  const auto& z = level.latents.value();

  std::vector<SiteRef> sites(static_cast<std::size_t>(n) * 8);
  LevelInterpolation out;
  out.out_of_field.assign(static_cast<std::size_t>(n), 0);
  MatrixXf value = MatrixXf::Zero(n, d);
  for (Eigen::Index q = 0; q < n; ++q) {
    const Eigen::Vector3f x = coords.value().row(q).transpose();
    const auto lattice = trilinear_weights<float>(x, lod);
    bool any = false;
    for (int c = 0; c < 8; ++c) {
      const auto& s = lattice[c];
      std::int32_t row = -1;
      if (s.in_lattice) row = static_cast<std::int32_t>(level.find(s.key.code));
      sites[static_cast<std::size_t>(q * 8 + c)] = {row, s.weight, s.weight_gradient};
      if (row >= 0) {
        any = true;
        if (s.weight != 0.0f) value.row(q) += s.weight * z.row(row);
      }
    }
    out.out_of_field[static_cast<std::size_t>(q)] = any ? 0 : 1;
  }

  const Tensorf latents = level.latents;
  out.latents = tape.record(std::move(value), {latents, coords}, [latents, coords, sites = std::move(sites), n](const MatrixXf& g) {
    if (latents.requires_grad()) {
      auto* node = latents.node();
      for (Eigen::Index q = 0; q < n; ++q) {
        for (int c = 0; c < 8; ++c) {
          const auto& s = sites[static_cast<std::size_t>(q * 8 + c)];
          if (s.row >= 0 && s.weight != 0.0f) node->grad.row(s.row) += s.weight * g.row(q);
        }
      }
      node->reached = true;
    }
    if (coords.requires_grad()) {
      const auto& zv = latents.value();
      MatrixXf dx = MatrixXf::Zero(n, 3);
      for (Eigen::Index q = 0; q < n; ++q) {
        for (int c = 0; c < 8; ++c) {
          const auto& s = sites[static_cast<std::size_t>(q * 8 + c)];
          if (s.row < 0) continue;
          const float dot = zv.row(s.row).dot(g.row(q));
          dx.row(q) += dot * s.weight_gradient.transpose();
        }
      }
      coords.accumulate_grad(dx);
    }
  });
  return out;
}

Tensorf fuse(Tapef& tape, std::span<const Tensorf> per_lod, FusionKind kind) {
  if (per_lod.empty()) throw DomainError("fuse: no levels");
  for (const auto& t : per_lod) {
    if (t.cols() != per_lod[0].cols() || t.rows() != per_lod[0].rows()) throw DomainError("fuse: latent shape mismatch");
  }
  if (kind == FusionKind::Concat) return tape.concat(per_lod);
  Tensorf acc = per_lod[0];
  for (std::size_t i = 1; i < per_lod.size(); ++i) acc = tape.add(acc, per_lod[i]);
  return acc;
}

FusedLatents fuse_query(Tapef& tape, const LatentOctree& tree, const Tensorf& coords, FusionKind kind) {
  std::vector<Tensorf> levels;
  FusedLatents out;
  out.out_of_field.assign(static_cast<std::size_t>(coords.rows()), 0);
  for (int lod = 1; lod <= tree.max_lod(); ++lod) {
    auto li = interpolate_lod(tape, tree, lod, coords);
    for (std::size_t q = 0; q < li.out_of_field.size(); ++q) out.out_of_field[q] |= li.out_of_field[q];
    levels.push_back(std::move(li.latents));
  }
  out.fused = fuse(tape, levels, kind);
  return out;
}

}  // namespace refine

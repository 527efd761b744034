#include "refine/expansion.hpp"

#include <algorithm>
#include <string>

namespace refine {

std::ptrdiff_t LatentLevel::find(std::uint64_t code) const {
  auto it = std::lower_bound(codes.begin(), codes.end(), code);
  if (it == codes.end() || *it != code) return -1;
  return it - codes.begin();
}

std::size_t LatentOctree::total_cells() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.size();
  return n;
}

SparseOctree LatentOctree::structure() const {
  std::vector<std::vector<std::uint64_t>> cells;
  for (const auto& l : levels) cells.push_back(l.codes);
  return SparseOctree::from_cells(max_lod(), std::move(cells));
}

LatentOctree expand_inference(const RefineNetworks& nets, const MatrixXf& root, int max_lod) {
  if (max_lod < 1) throw DomainError("expand_inference: max_lod must be >= 1");
  if (root.rows() != 1 || root.cols() != nets.subdivision.input_dim()) {
    throw DomainError("expand_inference: root latent must be 1 x D");
  }
  Tapef tape(false);
  LatentOctree tree;
  tree.levels.resize(static_cast<std::size_t>(max_lod) + 1);
  tree.levels[0].codes = {0};
  tree.levels[0].latents = Tensorf::constant(root);
  tree.levels[0].occupancy = {1.0f};
  const auto d = root.cols();
  for (int lod = 0; lod < max_lod; ++lod) {
    const auto& parent = tree.levels[lod];
    auto& next = tree.levels[lod + 1];
    if (parent.size() == 0) {
      next.latents = Tensorf::constant(MatrixXf(0, d));
      continue;
    }
    const Tensorf children = phi_expand(tape, nets, parent.latents);
    const Tensorf logits = occupancy_logits(tape, nets, children);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < children.rows(); ++r) {
      const float o = Tapef::stable_sigmoid(logits.value()(r, 0));
      if (o > 0.5f) {
        keep.push_back(r);
        next.codes.push_back((parent.codes[static_cast<std::size_t>(r / 8)] << 3) | static_cast<std::uint64_t>(r % 8));
        next.occupancy.push_back(o);
      }
    }
    MatrixXf kept(static_cast<Eigen::Index>(keep.size()), d);
    for (std::size_t i = 0; i < keep.size(); ++i) kept.row(static_cast<Eigen::Index>(i)) = children.value().row(keep[i]);
    next.latents = Tensorf::constant(std::move(kept));
  }
  tree.degenerate = tree.levels[1].size() == 0;
  return tree;
}

TrainingExpansion expand_training(Tapef& tape, const RefineNetworks& nets, const Tensorf& root,
                                  const SparseOctree& gt, int max_lod) {
  if (max_lod < 1) throw DomainError("expand_training: max_lod must be >= 1");
  if (gt.max_lod() < max_lod) {
    throw DomainError("expand_training: ground-truth octree has max lod " + std::to_string(gt.max_lod()) +
                      " < model max lod " + std::to_string(max_lod));
  }
  if (gt.empty()) throw DomainError("expand_training: ground-truth octree is empty");
  TrainingExpansion out;
  auto& tree = out.tree;
  tree.levels.resize(static_cast<std::size_t>(max_lod) + 1);
  tree.levels[0].codes = {0};
  tree.levels[0].latents = root;
  std::vector<Tensorf> logits;
  std::vector<float> targets;
  const auto d = root.cols();
  for (int lod = 0; lod < max_lod; ++lod) {
    const auto& parent = tree.levels[lod];
    auto& next = tree.levels[lod + 1];
    if (parent.size() == 0) {
      next.latents = Tensorf::constant(MatrixXf(0, d));
      continue;
    }
    const Tensorf children = phi_expand(tape, nets, parent.latents);
    logits.push_back(occupancy_logits(tape, nets, children));
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < children.rows(); ++r) {
      const std::uint64_t code =
          (parent.codes[static_cast<std::size_t>(r / 8)] << 3) | static_cast<std::uint64_t>(r % 8);
      const bool occupied = gt.contains({code, lod + 1});
      targets.push_back(occupied ? 1.0f : 0.0f);
      if (occupied) {
        keep.push_back(r);
        next.codes.push_back(code);
      }
    }
    next.latents = tape.gather_rows(children, std::move(keep));
  }
  tree.degenerate = tree.levels[1].size() == 0;
  out.logits = tape.concat_rows(logits);
  out.targets = Eigen::Map<const MatrixXf>(targets.data(), static_cast<Eigen::Index>(targets.size()), 1);
  return out;
}

}  // namespace refine

#include "refine/decoders.hpp"

#include <algorithm>

namespace refine {
namespace {

constexpr Eigen::Index kChunk = 8192;

void require_geometry_kind(const ModelConfig& config, const char* what) {
  if (config.field == FieldKind::Nerf) throw DomainError(std::string(what) + ": not available for nerf fields");
}

}  // namespace

DecodedField decode_field(Tapef& tape, const RefineNetworks& nets, const ModelConfig& config,
                          const LatentOctree& tree, const Tensorf& coords, const std::optional<Tensorf>& view_dirs) {
  if (config.field == FieldKind::Nerf && !view_dirs) throw DomainError("decode: nerf fields need a view direction");
  if (config.field != FieldKind::Nerf && view_dirs) throw DomainError("decode: view direction given for a non-nerf field");
  auto fused = fuse_query(tape, tree, coords, config.fusion);
  DecodedField out;
  out.geometry = psi_geometry(tape, nets, config.field, fused.fused);
  if (has_color(config.field)) out.color = xi_color(tape, nets, config.field, fused.fused, view_dirs);
  out.out_of_field = std::move(fused.out_of_field);
  return out;
}

FieldSamples decode(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                    const MatrixXf& coords, const MatrixXf* view_dirs) {
  if (coords.cols() != 3) throw DomainError("decode: coordinates must be N x 3");
  if (view_dirs && (view_dirs->rows() != coords.rows() || view_dirs->cols() != 3)) {
    throw DomainError("decode: view directions must be N x 3");
  }
  const Eigen::Index n = coords.rows();
  FieldSamples out;
  out.geometry.resize(n);
  if (has_color(config.field)) out.colors.resize(n, 3);
  out.out_of_field.resize(static_cast<std::size_t>(n));
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    Tapef tape(false);
    std::optional<Tensorf> dirs;
    if (view_dirs) dirs = Tensorf::constant(view_dirs->middleRows(start, len));
    auto field = decode_field(tape, nets, config, tree, Tensorf::constant(coords.middleRows(start, len)), dirs);
    out.geometry.segment(start, len) = field.geometry.value().col(0);
    if (field.color) out.colors.middleRows(start, len) = field.color->value();
    std::copy(field.out_of_field.begin(), field.out_of_field.end(), out.out_of_field.begin() + start);
  }
  return out;
}

FieldValue decode_point(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                        const Eigen::Vector3f& x, const std::optional<Eigen::Vector3f>& view_dir) {
  const MatrixXf coords = x.transpose();
  MatrixXf dirs;
  if (view_dir) dirs = view_dir->transpose();
  const auto samples = decode(nets, config, tree, coords, view_dir ? &dirs : nullptr);
  FieldValue v;
  if (config.field == FieldKind::Nerf) {
    v.density = samples.geometry[0];
  } else {
    v.sdf = samples.geometry[0];
  }
  if (has_color(config.field)) v.color = samples.colors.row(0).transpose();
  v.out_of_field = samples.out_of_field[0] != 0;
  return v;
}

NormalSamples sdf_normals(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                          const MatrixXf& coords) {
  require_geometry_kind(config, "sdf_normals");
  const Eigen::Index n = coords.rows();
  NormalSamples out;
  out.sdf.resize(n);
  out.normals = MatrixXf::Zero(n, 3);
  out.degenerate.assign(static_cast<std::size_t>(n), 0);
  out.out_of_field.assign(static_cast<std::size_t>(n), 0);
  const RefineNetworks frozen = nets.frozen();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    Tapef tape;
    Tensorf x = Tensorf::parameter(coords.middleRows(start, len));
    auto fused = fuse_query(tape, tree, x, config.fusion);
    Tensorf s = psi_geometry(tape, frozen, config.field, fused.fused);
    tape.backward(tape.sum(s));
    for (Eigen::Index i = 0; i < len; ++i) {
      const auto q = static_cast<std::size_t>(start + i);
      out.sdf[start + i] = s.value()(i, 0);
      out.out_of_field[q] = fused.out_of_field[static_cast<std::size_t>(i)];
      const Eigen::Vector3f g = x.grad().row(i).transpose();
      const float norm = g.norm();
      if (!(norm >= kMinGradientNorm) || !g.allFinite()) {
        out.degenerate[q] = 1;
      } else {
        out.normals.row(start + i) = (g / norm).transpose();
      }
    }
  }
  return out;
}

Eigen::Vector3f sdf_normal(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                           const Eigen::Vector3f& x) {
  const MatrixXf coords = x.transpose();
  const auto r = sdf_normals(nets, config, tree, coords);
  if (r.degenerate[0]) throw NumericalError("sdf_normal: gradient norm below threshold");
  return r.normals.row(0).transpose();
}

}  // namespace refine

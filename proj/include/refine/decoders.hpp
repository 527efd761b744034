#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "refine/expansion.hpp"
#include "refine/fusion.hpp"
#include "refine/networks.hpp"

namespace refine {

/// Tape-level decode of a batch of query points.
struct DecodedField {
  Tensorf geometry;              // [N x 1] signed distance or density
  std::optional<Tensorf> color;  // [N x 3], absent for Sdf
  std::vector<std::uint8_t> out_of_field;
};

DecodedField decode_field(Tapef& tape, const RefineNetworks& nets, const ModelConfig& config,
                          const LatentOctree& tree, const Tensorf& coords,
                          const std::optional<Tensorf>& view_dirs = std::nullopt);

/// Value-level decode results for a batch.
struct FieldSamples {
  Eigen::VectorXf geometry;
  MatrixXf colors;  // N x 3, empty for Sdf
  std::vector<std::uint8_t> out_of_field;
};

/// Decodes in chunks without recording gradients. `view_dirs` is required
/// for Nerf models and rejected otherwise.
FieldSamples decode(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                    const MatrixXf& coords, const MatrixXf* view_dirs = nullptr);

/// Field value at one point. `sdf` is set for Sdf/SdfRgb, `density` for Nerf.
struct FieldValue {
  std::optional<float> sdf;
  std::optional<float> density;
  std::optional<Eigen::Vector3f> color;
  bool out_of_field = false;
};

FieldValue decode_point(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                        const Eigen::Vector3f& x, const std::optional<Eigen::Vector3f>& view_dir = std::nullopt);

struct NormalSamples {
  Eigen::VectorXf sdf;
  MatrixXf normals;  // unit rows; zero where degenerate
  std::vector<std::uint8_t> degenerate;
  std::vector<std::uint8_t> out_of_field;
};

inline constexpr float kMinGradientNorm = 1e-8f;

/// Signed distance and its normalized spatial gradient, by reverse-mode
/// differentiation through the fusion and geometry head.
NormalSamples sdf_normals(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                          const MatrixXf& coords);

/// Unit normal at one point; throws NumericalError when the gradient vanishes.
Eigen::Vector3f sdf_normal(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                           const Eigen::Vector3f& x);

}  // namespace refine

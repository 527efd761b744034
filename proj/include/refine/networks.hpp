#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "refine/model_config.hpp"
#include "refine/tensor.hpp"

namespace refine {

/// Fully connected network with sine (SIREN) or ReLU hidden activations and a
/// linear output layer. Weights are stored in x * W + b orientation.
class SirenMlp {
 public:
  SirenMlp() = default;
  SirenMlp(std::vector<int> dims, Activation activation, float omega0, std::mt19937_64& rng);

  Tensorf forward(Tapef& tape, const Tensorf& x) const;

  bool empty() const { return dims_.empty(); }
  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Activation activation() const { return activation_; }
  float omega0() const { return omega0_; }

  std::size_t layer_count() const { return weights_.size(); }
  const Tensorf& weight(std::size_t layer) const { return weights_.at(layer); }
  const Tensorf& bias(std::size_t layer) const { return biases_.at(layer); }
  Tensorf& weight(std::size_t layer) { return weights_.at(layer); }
  Tensorf& bias(std::size_t layer) { return biases_.at(layer); }

  /// Weight/bias pairs in layer order.
  std::vector<Tensorf> parameters() const;
  std::size_t parameter_count() const;

 private:
  std::vector<int> dims_;
  Activation activation_ = Activation::Sine;
  float omega0_ = 30.0f;
  std::vector<Tensorf> weights_;
  std::vector<Tensorf> biases_;
};

/// The four shared networks: subdivision (D -> 8D), occupancy (D -> 1),
/// geometry (fused -> 1) and color (fused [+3 view dir] -> 3).
struct RefineNetworks {
  SirenMlp subdivision;
  SirenMlp occupancy;
  SirenMlp geometry;
  SirenMlp color;  // empty for FieldKind::Sdf

  static RefineNetworks create(const ModelConfig& config, std::uint64_t seed);

  /// Every parameter tensor with a stable name ("phi.0.weight", ...).
  std::vector<std::pair<std::string, Tensorf>> named_parameters() const;
  std::vector<Tensorf> parameters() const;
  std::size_t parameter_count() const;

  /// Copy whose parameters are constants, for gradients w.r.t. inputs only.
  RefineNetworks frozen() const;
};

/// One trainable D-dimensional root latent per object.
class LatentTable {
 public:
  LatentTable() = default;
  static LatentTable create(std::vector<std::string> ids, int latent_dim, std::uint64_t seed);
  static LatentTable from_matrix(std::vector<std::string> ids, const MatrixXf& latents);

  std::size_t size() const { return ids_.size(); }
  int latent_dim() const { return latent_dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  /// Row of `id`; throws DomainError for unknown ids.
  std::size_t index_of(const std::string& id) const;

  const Tensorf& latent(std::size_t k) const { return rows_.at(k); }
  Tensorf& latent(std::size_t k) { return rows_.at(k); }
  std::vector<Tensorf> parameters() const { return rows_; }
  MatrixXf as_matrix() const;

 private:
  std::vector<std::string> ids_;
  std::vector<Tensorf> rows_;
  int latent_dim_ = 0;
};

/// Everything needed to reconstruct every encoded object.
struct ModelBundle {
  ModelConfig config;
  RefineNetworks nets;
  LatentTable latents;

  static ModelBundle create(const ModelConfig& config, std::vector<std::string> ids, std::uint64_t seed);
  /// Deep copy; the result shares no tensors with this bundle.
  ModelBundle clone() const;
};

/// Parent latents [n x D] to child latents [8n x D]; rows 8r .. 8r+7 are the
/// children of parent r in Morton child order.
Tensorf phi_expand(Tapef& tape, const RefineNetworks& nets, const Tensorf& parents);

/// Occupancy logits [n x 1]; occupancy is sigmoid(logit).
Tensorf occupancy_logits(Tapef& tape, const RefineNetworks& nets, const Tensorf& latents);
float omega_occupancy(const RefineNetworks& nets, const MatrixXf& latent);

/// Signed distance (Sdf, SdfRgb) or softplus density (Nerf), [n x 1].
Tensorf psi_geometry(Tapef& tape, const RefineNetworks& nets, FieldKind kind, const Tensorf& fused);

/// Colors in [0, 1], [n x 3]. View directions are required for Nerf and
/// rejected otherwise.
Tensorf xi_color(Tapef& tape, const RefineNetworks& nets, FieldKind kind, const Tensorf& fused,
                 const std::optional<Tensorf>& view_dirs);

}  // namespace refine

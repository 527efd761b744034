#include "refine/networks.hpp"

#include <cmath>

#include "refine/errors.hpp"

namespace refine {

std::string to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::Sdf: return "sdf";
    case FieldKind::SdfRgb: return "sdf-rgb";
    case FieldKind::Nerf: return "nerf";
  }
  return "?";
}

std::string to_string(FusionKind kind) { return kind == FusionKind::Sum ? "sum" : "concat"; }
std::string to_string(Activation act) { return act == Activation::Sine ? "sine" : "relu"; }

FieldKind parse_field_kind(const std::string& s) {
  if (s == "sdf") return FieldKind::Sdf;
  if (s == "sdf-rgb") return FieldKind::SdfRgb;
  if (s == "nerf") return FieldKind::Nerf;
  throw DomainError("unknown field kind '" + s + "' (expected sdf, sdf-rgb or nerf)");
}

FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "sum") return FusionKind::Sum;
  if (s == "concat") return FusionKind::Concat;
  throw DomainError("unknown fusion scheme '" + s + "' (expected sum or concat)");
}

Activation parse_activation(const std::string& s) {
  if (s == "sine") return Activation::Sine;
  if (s == "relu") return Activation::Relu;
  throw DomainError("unknown activation '" + s + "' (expected sine or relu)");
}

void ModelConfig::validate() const {
  if (latent_dim < 1) throw DomainError("latent_dim must be positive");
  if (max_lod < 1 || max_lod > 20) throw DomainError("max_lod must be in [1, 20]");
  if (subdivision_hidden < 1) throw DomainError("subdivision_hidden must be positive");
  for (int h : head_hidden) {
    if (h < 1) throw DomainError("head widths must be positive");
  }
  if (!(omega0 > 0.0f)) throw DomainError("omega0 must be positive");
}

SirenMlp::SirenMlp(std::vector<int> dims, Activation activation, float omega0, std::mt19937_64& rng)
    : dims_(std::move(dims)), activation_(activation), omega0_(omega0) {
  if (dims_.size() < 2) throw DomainError("SirenMlp needs at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    float bound;
    if (activation_ == Activation::Relu) {
      bound = std::sqrt(6.0f / static_cast<float>(in));
    } else if (l == 0) {
      bound = 1.0f / static_cast<float>(in);
    } else {
      bound = std::sqrt(6.0f / static_cast<float>(in)) / omega0_;
    }
    std::uniform_real_distribution<float> wdist(-bound, bound);
    const float bbound = 1.0f / std::sqrt(static_cast<float>(in));
    std::uniform_real_distribution<float> bdist(-bbound, bbound);
    MatrixXf w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = wdist(rng);
    MatrixXf b(1, out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = bdist(rng);
    weights_.push_back(Tensorf::parameter(std::move(w)));
    biases_.push_back(Tensorf::parameter(std::move(b)));
  }
}

Tensorf SirenMlp::forward(Tapef& tape, const Tensorf& x) const {
  if (x.cols() != input_dim()) throw DomainError("SirenMlp: input width mismatch");
  Tensorf h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.linear(h, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) {
      h = activation_ == Activation::Sine ? tape.sin(h, omega0_) : tape.relu(h);
    }
  }
  return h;
}

std::vector<Tensorf> SirenMlp::parameters() const {
  std::vector<Tensorf> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

std::size_t SirenMlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.size());
  return n;
}

RefineNetworks RefineNetworks::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int d = config.latent_dim;
  auto head = [&](int in, int out) {
    std::vector<int> dims{in};
    dims.insert(dims.end(), config.head_hidden.begin(), config.head_hidden.end());
    dims.push_back(out);
    return SirenMlp(dims, config.activation, config.omega0, rng);
  };
  RefineNetworks nets;
  nets.subdivision = SirenMlp({d, config.subdivision_hidden, 8 * d}, config.activation, config.omega0, rng);
  nets.occupancy = head(d, 1);
  nets.geometry = head(config.fused_dim(), 1);
  if (config.field == FieldKind::SdfRgb) nets.color = head(config.fused_dim(), 3);
  if (config.field == FieldKind::Nerf) nets.color = head(config.fused_dim() + 3, 3);
  return nets;
}

std::vector<std::pair<std::string, Tensorf>> RefineNetworks::named_parameters() const {
  std::vector<std::pair<std::string, Tensorf>> out;
  auto add = [&](const char* prefix, const SirenMlp& mlp) {
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
      const std::string base = std::string(prefix) + "." + std::to_string(l);
      out.emplace_back(base + ".weight", mlp.weight(l));
      out.emplace_back(base + ".bias", mlp.bias(l));
    }
  };
  add("phi", subdivision);
  add("omega", occupancy);
  add("psi", geometry);
  if (!color.empty()) add("xi", color);
  return out;
}

std::vector<Tensorf> RefineNetworks::parameters() const {
  std::vector<Tensorf> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t RefineNetworks::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.size());
  return n;
}

RefineNetworks RefineNetworks::frozen() const {
  RefineNetworks copy = *this;
  for (SirenMlp* mlp : {&copy.subdivision, &copy.occupancy, &copy.geometry, &copy.color}) {
    for (std::size_t l = 0; l < mlp->layer_count(); ++l) {
      mlp->weight(l) = Tensorf::constant(mlp->weight(l).value());
      mlp->bias(l) = Tensorf::constant(mlp->bias(l).value());
    }
  }
  return copy;
}

LatentTable LatentTable::create(std::vector<std::string> ids, int latent_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 0.01f);
  MatrixXf m(static_cast<Eigen::Index>(ids.size()), latent_dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return from_matrix(std::move(ids), m);
}

LatentTable LatentTable::from_matrix(std::vector<std::string> ids, const MatrixXf& latents) {
  if (static_cast<Eigen::Index>(ids.size()) != latents.rows()) throw DomainError("LatentTable: id/row count mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (ids[i] == ids[j]) throw DomainError("LatentTable: duplicate object id '" + ids[i] + "'");
    }
  }
  LatentTable table;
  table.ids_ = std::move(ids);
  table.latent_dim_ = static_cast<int>(latents.cols());
  for (Eigen::Index r = 0; r < latents.rows(); ++r) table.rows_.push_back(Tensorf::parameter(latents.row(r)));
  return table;
}

std::size_t LatentTable::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] == id) return i;
  }
  throw DomainError("unknown object id '" + id + "'");
}

MatrixXf LatentTable::as_matrix() const {
  MatrixXf m(static_cast<Eigen::Index>(rows_.size()), latent_dim_);
  for (std::size_t i = 0; i < rows_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows_[i].value();
  return m;
}

ModelBundle ModelBundle::create(const ModelConfig& config, std::vector<std::string> ids, std::uint64_t seed) {
  ModelBundle bundle;
  bundle.config = config;
  bundle.nets = RefineNetworks::create(config, seed);
  bundle.latents = LatentTable::create(std::move(ids), config.latent_dim, seed ^ 0x9e3779b97f4a7c15ULL);
  return bundle;
}

ModelBundle ModelBundle::clone() const {
  ModelBundle copy;
  copy.config = config;
  copy.nets = nets;
  for (SirenMlp* mlp : {&copy.nets.subdivision, &copy.nets.occupancy, &copy.nets.geometry, &copy.nets.color}) {
    for (std::size_t l = 0; l < mlp->layer_count(); ++l) {
      mlp->weight(l) = Tensorf::parameter(mlp->weight(l).value());
      mlp->bias(l) = Tensorf::parameter(mlp->bias(l).value());
    }
  }
  copy.latents = LatentTable::from_matrix(latents.ids(), latents.as_matrix());
  return copy;
}

Tensorf phi_expand(Tapef& tape, const RefineNetworks& nets, const Tensorf& parents) {
  const int d = nets.subdivision.input_dim();
  if (parents.cols() != d) throw DomainError("phi_expand: latent width mismatch");
  Tensorf out = nets.subdivision.forward(tape, parents);
  return tape.reshape(out, parents.rows() * 8, d);
}

Tensorf occupancy_logits(Tapef& tape, const RefineNetworks& nets, const Tensorf& latents) {
  return nets.occupancy.forward(tape, latents);
}

float omega_occupancy(const RefineNetworks& nets, const MatrixXf& latent) {
  Tapef tape(false);
  const float logit = occupancy_logits(tape, nets, Tensorf::constant(latent)).item();
  return Tapef::stable_sigmoid(logit);
}

Tensorf psi_geometry(Tapef& tape, const RefineNetworks& nets, FieldKind kind, const Tensorf& fused) {
  Tensorf raw = nets.geometry.forward(tape, fused);
  return kind == FieldKind::Nerf ? tape.softplus(raw) : raw;
}

Tensorf xi_color(Tapef& tape, const RefineNetworks& nets, FieldKind kind, const Tensorf& fused,
                 const std::optional<Tensorf>& view_dirs) {
  if (kind == FieldKind::Sdf || nets.color.empty()) throw DomainError("xi_color: model has no color head");
  Tensorf input = fused;
  if (kind == FieldKind::Nerf) {
    if (!view_dirs) throw DomainError("xi_color: view direction required for nerf fields");
    if (view_dirs->cols() != 3 || view_dirs->rows() != fused.rows()) throw DomainError("xi_color: bad view dirs");
    const Tensorf parts[] = {fused, *view_dirs};
    input = tape.concat(parts);
  } else if (view_dirs) {
    throw DomainError("xi_color: view direction given for a non-nerf field");
  }
  return tape.sigmoid(nets.color.forward(tape, input));
}

}  // namespace refine

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace refine {

enum class FieldKind : std::uint8_t { Sdf = 0, SdfRgb = 1, Nerf = 2 };
enum class FusionKind : std::uint8_t { Sum = 0, Concat = 1 };
enum class Activation : std::uint8_t { Sine = 0, Relu = 1 };

std::string to_string(FieldKind kind);
std::string to_string(FusionKind kind);
std::string to_string(Activation act);
FieldKind parse_field_kind(const std::string& s);
FusionKind parse_fusion_kind(const std::string& s);
Activation parse_activation(const std::string& s);

inline bool has_color(FieldKind kind) { return kind != FieldKind::Sdf; }

/// Architecture of one model: latent size, octree depth and network widths.
struct ModelConfig {
  FieldKind field = FieldKind::Sdf;
  int latent_dim = 32;
  int max_lod = 4;
  FusionKind fusion = FusionKind::Concat;
  /// Width of the single hidden layer of the subdivision network.
  int subdivision_hidden = 1024;
  /// Hidden widths shared by the occupancy, geometry and color heads.
  std::vector<int> head_hidden{256, 256};
  Activation activation = Activation::Sine;
  float omega0 = 30.0f;

  /// Input width of the geometry and color heads.
  int fused_dim() const { return fusion == FusionKind::Sum ? latent_dim : latent_dim * max_lod; }

  /// Throws DomainError on an unusable configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace refine

#pragma once

// Supervision data for one object: the ground-truth occupancy octree, field
// samples drawn in two bands around the surface, and a reference surface
// point set used for evaluation.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "refine/geometry.hpp"
#include "refine/model_config.hpp"
#include "refine/shapes.hpp"
#include "refine/tensor.hpp"

namespace refine {

/// Conservative surface-crossing octree: a cell at lod m is occupied iff
/// |sdf(center)| <= sqrt(3) * half_extent, followed by a 3x3x3 dilation of
/// every level from M down to 1.
SparseOctree build_gt_octree(const AnalyticShape& shape, int max_lod);

/// Toy radiance field: solid interior with a linear density ramp of width
/// `shell_width` inside the surface, colored by the shape's color function
/// with optional Lambertian shading from a fixed light.
struct NerfToyField {
  AnalyticShape shape;
  double sigma0 = 20.0;
  double shell_width = 0.04;
  bool lambertian = true;
  Eigen::Vector3d light_dir = Eigen::Vector3d(1.0, 2.0, 1.5).normalized();
  double ambient = 0.35;

  double density(const Eigen::Vector3d& x) const;
  /// View-independent; `d` is accepted for interface symmetry.
  Eigen::Vector3d color(const Eigen::Vector3d& x, const Eigen::Vector3d& d) const;
};

NerfToyField make_nerf_toy(const AnalyticShape& shape);

struct BandConfig {
  /// Half-width of the wide band; 0 selects 1 / 2^(M-1).
  double wide_width = 0.0;
  /// Half-width of the tight band; 0 selects 1 / 2^(M+1).
  double tight_width = 0.0;
  double tight_fraction = 0.5;
  /// Share of points drawn uniformly inside occupied max-lod cells with no
  /// band constraint (taken before the two bands split the rest).
  double volume_fraction = 0.0;
  std::size_t attempts_per_sample = 2000;
};

struct FieldSampleSet {
  std::string id;
  FieldKind kind = FieldKind::Sdf;
  SparseOctree octree;
  MatrixXf coords;           // N x 3
  Eigen::VectorXf geometry;  // signed distance or density
  MatrixXf colors;           // N x 3 (SdfRgb, Nerf)
  MatrixXf view_dirs;        // N x 3 (Nerf)
  /// Reference surface for evaluation (may be empty).
  SurfaceSamples surface;

  Eigen::Index size() const { return coords.rows(); }
  int max_lod() const { return octree.max_lod(); }
};

/// Draws `count` samples: a `volume_fraction` share uniformly in occupied
/// max-lod cells, the rest split between the tight and wide bands by
/// rejection from occupied-cell interiors. Targets are evaluated in double
/// precision at the float-rounded coordinates.
FieldSampleSet sample_bands(const AnalyticShape& shape, const SparseOctree& octree, std::size_t count, FieldKind kind,
                            std::uint64_t seed, const BandConfig& bands = {},
                            const std::optional<NerfToyField>& nerf = std::nullopt);

struct ObjectSpec {
  std::string id;
  AnalyticShape shape;
};

struct GenerationOptions {
  int max_lod = 4;
  std::size_t samples = 100000;
  std::size_t surface_samples = 1 << 14;
  FieldKind kind = FieldKind::Sdf;
  std::uint64_t seed = 0;
  BandConfig bands;
};

/// Octree, band samples and reference surface for one object.
FieldSampleSet generate_object(const ObjectSpec& spec, const GenerationOptions& options);

/// Binary dataset container, little-endian:
///   "RFND" u32 version u32 object-count, then per object:
///   string id, u8 kind, u32 max_lod, u32 N, u32 octree byte count, octree
///   bytes, N records of fp32 (x y z, then s | s r g b | sigma r g b dx dy dz),
///   u32 S, S records of fp32 (px py pz nx ny nz r g b).
/// Strings are u32 length + bytes.
void save_dataset(const std::string& path, const std::vector<FieldSampleSet>& objects);
std::vector<FieldSampleSet> load_dataset(const std::string& path);
std::vector<std::uint8_t> encode_dataset(const std::vector<FieldSampleSet>& objects);
std::vector<FieldSampleSet> decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace refine

#pragma once

// Renderers over an occupancy octree: iso-surface projection to oriented
// points, sphere tracing and emission-absorption volume rendering. Every
// march is confined to the occupied cells of the finest level.

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <vector>

#include "refine/decoders.hpp"
#include "refine/geometry.hpp"
#include "refine/networks.hpp"

namespace refine {

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d world_from_camera = Eigen::Matrix4d::Identity();
  int width = 0;
  int height = 0;

  /// Throws DomainError for a singular K, non-orthonormal rotation or empty image.
  void validate() const;

  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                        double vertical_fov_deg, int width, int height);
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit
};

/// Ray through the center of pixel (px, py).
Ray pixel_ray(const Camera& camera, int px, int py);

/// Slab test against [lo, hi]; returns (t_enter, t_exit) clipped to t >= 0
/// when the ray passes through a set of positive length.
std::optional<std::pair<double, double>> ray_box(const Ray& ray, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

struct RayInterval {
  double enter;
  double exit;
  std::uint64_t code;  // finest-level cell
};

/// Intervals of `ray` inside the occupied finest-level cells of `tree`,
/// sorted by entry depth. Found by descending the hierarchy; the leaf test is
/// the plain slab test of ray_box.
std::vector<RayInterval> ray_voxel_intersections(const SparseOctree& tree, const Ray& ray);

struct Span {
  double enter;
  double exit;
};

/// One span per non-empty voxel interval. Volume rendering stratifies inside
/// these so no stratum straddles a voxel boundary.
std::vector<Span> voxel_spans(const std::vector<RayInterval>& intervals);

/// Merges touching or overlapping intervals.
std::vector<Span> merge_intervals(const std::vector<RayInterval>& intervals, double gap = 1e-9);

/// Batched field callbacks. SdfFn maps N x 3 points to N distances.
/// RadianceFn maps points and unit view directions to density and color.
using SdfFn = std::function<Eigen::VectorXf(const MatrixXf& points)>;
using RadianceFn = std::function<void(const MatrixXf& points, const MatrixXf& dirs, Eigen::VectorXf& sigma,
                                      MatrixXf& rgb)>;

struct SphereTraceOptions {
  int max_steps = 128;
  double hit_eps = 1e-3;
};

struct TraceResult {
  bool hit = false;
  double t = 0;
  int steps = 0;
};

/// Sphere tracing inside the merged spans of each ray, all rays advanced in
/// lockstep so each step is one batched SDF evaluation. A negative distance
/// at span entry counts as an immediate hit.
std::vector<TraceResult> sphere_trace(const SdfFn& sdf, const std::vector<std::vector<Span>>& spans,
                                      const std::vector<Ray>& rays, const SphereTraceOptions& options = {});

struct VolumeOptions {
  int samples_per_ray = 128;
  std::uint64_t seed = 0;
};

/// Compositing of depth-ordered samples: w_k = T_k (1 - exp(-sigma_k delta_k)),
/// T_k = exp(-sum_{j<k} sigma_j delta_j), black background.
struct Composite {
  Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
  double opacity = 0;
  double depth = 0;  // weight-averaged depth (0 when opacity is 0)
  Eigen::VectorXd weights;
  Eigen::VectorXd transmittance;
};

Composite composite(const Eigen::VectorXd& t, const Eigen::VectorXd& delta, const Eigen::VectorXd& sigma,
                    const Eigen::MatrixX3d& rgb);

/// Stratified depths: `budget` samples spread over the spans in proportion
/// to their lengths (largest remainder, at least one per span if the budget
/// allows), one uniform jitter per stratum.
/// delta_k is the stratum width, so the deltas of a span sum to its length.
void stratified_samples(const std::vector<Span>& spans, int budget, std::uint64_t seed, std::vector<double>& t,
                        std::vector<double>& delta);

/// Volume rendering of a batch of rays; `seeds[i]` drives the jitter of ray i.
std::vector<Composite> volume_render(const RadianceFn& field, const std::vector<std::vector<Span>>& spans,
                                     const std::vector<Ray>& rays, const std::vector<std::uint64_t>& seeds,
                                     const VolumeOptions& options = {});

enum class RendererKind { Sphere, Volume };
RendererKind parse_renderer(const std::string& s);

struct Image {
  int width = 0;
  int height = 0;
  MatrixXf rgb;                    // (width * height) x 3, row = y * width + x
  std::vector<std::uint8_t> mask;  // hit (sphere) or opacity > 0.5 (volume)
  Eigen::VectorXf depth;
  std::size_t ray_count = 0;
};

struct RenderOptions {
  SphereTraceOptions trace;
  VolumeOptions volume;
  unsigned threads = 1;
  /// Rays per batched evaluation.
  std::size_t batch = 1024;
};

/// Sphere-traced image; hits are shaded by `shade` (points -> rgb) when given,
/// otherwise white.
Image render_sphere(const Camera& camera, const SparseOctree& occupancy, const SdfFn& sdf,
                    const std::function<MatrixXf(const MatrixXf&)>& shade, const RenderOptions& options = {});

/// Volume-rendered image; pixel (x, y) uses jitter seed hash(seed, y * width + x).
Image render_volume(const Camera& camera, const SparseOctree& occupancy, const RadianceFn& field,
                    const RenderOptions& options = {});

/// Model adapters. Out-of-field samples have zero density.
SdfFn model_sdf(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree);
RadianceFn model_radiance(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree);

/// Renders a decoded object with the requested renderer. Sphere tracing
/// needs an Sdf or SdfRgb model and volume rendering a Nerf model. SdfRgb
/// hits take the decoded color, Sdf hits a headlight shading of the normal.
Image render_image(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                   const Camera& camera, RendererKind kind, const RenderOptions& options = {});

struct IsoSurfaceOptions {
  /// Extra uniform samples per occupied cell besides its center.
  int samples_per_voxel = 0;
  int iterations = 1;
  /// Keep points with |s| below this after projection; 0 selects 1 / 2^(M+2).
  double tau = 0;
  std::uint64_t seed = 0;
};

struct OrientedPoints {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;
  Eigen::MatrixX3d colors;  // empty for Sdf
  Eigen::VectorXd residual;  // |s| after projection
  std::size_t degenerate = 0;
  std::size_t candidates = 0;
};

/// Zero-level-set projection x <- x - s n from the finest occupied cells.
OrientedPoints isosurface_extract(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                                  const IsoSurfaceOptions& options = {});

}  // namespace refine

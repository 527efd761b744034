#pragma once

// Analytic solids described by signed distance functions. Shapes are
// immutable values built from primitives, boolean combinations and
// similarity transforms, with an optional color function over space.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <functional>
#include <memory>
#include <random>
#include <string>

namespace refine {

struct Aabb {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
};

class AnalyticShape {
 public:
  using ColorFn = std::function<Eigen::Vector3d(const Eigen::Vector3d&)>;

  AnalyticShape() = default;

  static AnalyticShape sphere(double radius);
  static AnalyticShape box(const Eigen::Vector3d& half_extents);
  /// Torus around the y axis.
  static AnalyticShape torus(double major_radius, double minor_radius);
  static AnalyticShape unite(const AnalyticShape& a, const AnalyticShape& b);
  static AnalyticShape intersect(const AnalyticShape& a, const AnalyticShape& b);
  /// Polynomial smooth minimum with blend radius k.
  static AnalyticShape smooth_unite(const AnalyticShape& a, const AnalyticShape& b, double k);

  AnalyticShape translated(const Eigen::Vector3d& t) const;
  AnalyticShape scaled(double s) const;
  AnalyticShape rotated(const Eigen::Matrix3d& r) const;
  AnalyticShape with_color(ColorFn color) const;

  bool valid() const { return root_ != nullptr; }

  /// Positive outside, negative inside. Exact for primitives, unions and
  /// similarity transforms; a bound for intersections and smooth unions.
  double sdf(const Eigen::Vector3d& x) const;
  /// Central-difference gradient of sdf.
  Eigen::Vector3d gradient(const Eigen::Vector3d& x) const;
  Eigen::Vector3d normal(const Eigen::Vector3d& x) const { return gradient(x).normalized(); }
  /// Newton projection onto the zero level set.
  Eigen::Vector3d project_to_surface(const Eigen::Vector3d& x, int max_iterations = 20) const;

  bool has_color() const { return static_cast<bool>(color_); }
  /// Color at x, clamped to [0, 1]; mid gray when no color function is set.
  Eigen::Vector3d color(const Eigen::Vector3d& x) const;

  Aabb bounds() const;
  /// Upper bound on the distance from `center` to any point of the solid
  /// (exact for primitives and unions).
  double bounding_radius(const Eigen::Vector3d& center) const;

  struct Node;

 private:
  explicit AnalyticShape(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  std::shared_ptr<const Node> root_;
  ColorFn color_;
};

/// Recenters the shape on its bounding-box center and scales it so the
/// bounding sphere has radius `target_radius`. Throws DomainError for
/// zero-extent shapes.
AnalyticShape normalize_to_unit(const AnalyticShape& shape, double target_radius = 0.9);

struct PointNormalization {
  Eigen::Vector3d center;
  double scale;
};

/// Same normalization for a point set (rows are points); rewrites `points`
/// in place and returns the applied transform x' = (x - center) * scale.
PointNormalization normalize_points(Eigen::MatrixX3d& points, double target_radius = 0.9);

/// Oriented colored samples on the zero level set.
struct SurfaceSamples {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;
  Eigen::MatrixX3d colors;
};

/// Approximately area-uniform surface samples: uniform candidates in a thin
/// band around the surface, projected onto it.
SurfaceSamples sample_surface(const AnalyticShape& shape, std::size_t count, std::uint64_t seed);

}  // namespace refine

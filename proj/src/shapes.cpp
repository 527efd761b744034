#include "refine/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

#include "refine/errors.hpp"

namespace refine {

namespace {

struct SphereNode {
  double radius;
};
struct BoxNode {
  Eigen::Vector3d half;
};
struct TorusNode {
  double major;
  double minor;
};
struct UnionNode {
  std::shared_ptr<const AnalyticShape::Node> a, b;
};
struct IntersectionNode {
  std::shared_ptr<const AnalyticShape::Node> a, b;
};
struct SmoothUnionNode {
  std::shared_ptr<const AnalyticShape::Node> a, b;
  double k;
};
// world = scale * rotation * local + translation
struct TransformNode {
  std::shared_ptr<const AnalyticShape::Node> child;
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
  double scale;
};

}  // namespace

struct AnalyticShape::Node {
  std::variant<SphereNode, BoxNode, TorusNode, UnionNode, IntersectionNode, SmoothUnionNode, TransformNode> v;
};

namespace {

using NodePtr = std::shared_ptr<const AnalyticShape::Node>;

template <typename T>
NodePtr make(T value) {
  auto n = std::make_shared<AnalyticShape::Node>();
  n->v = std::move(value);
  return n;
}

double node_sdf(const AnalyticShape::Node& node, const Eigen::Vector3d& p) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, SphereNode>) {
          return p.norm() - n.radius;
        } else if constexpr (std::is_same_v<T, BoxNode>) {
          const Eigen::Vector3d q = p.cwiseAbs() - n.half;
          return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        } else if constexpr (std::is_same_v<T, TorusNode>) {
          const double ring = std::hypot(p.x(), p.z()) - n.major;
          return std::hypot(ring, p.y()) - n.minor;
        } else if constexpr (std::is_same_v<T, UnionNode>) {
          return std::min(node_sdf(*n.a, p), node_sdf(*n.b, p));
        } else if constexpr (std::is_same_v<T, IntersectionNode>) {
          return std::max(node_sdf(*n.a, p), node_sdf(*n.b, p));
        } else if constexpr (std::is_same_v<T, SmoothUnionNode>) {
          const double a = node_sdf(*n.a, p);
          const double b = node_sdf(*n.b, p);
          const double h = std::clamp(0.5 + 0.5 * (b - a) / n.k, 0.0, 1.0);
          return b + (a - b) * h - n.k * h * (1.0 - h);
        } else {
          const Eigen::Vector3d local = n.rotation.transpose() * (p - n.translation) / n.scale;
          return n.scale * node_sdf(*n.child, local);
        }
      },
      node.v);
}

Aabb merge(const Aabb& a, const Aabb& b) { return {a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi)}; }

Aabb node_bounds(const AnalyticShape::Node& node) {
  return std::visit(
      [&](const auto& n) -> Aabb {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, SphereNode>) {
          return {Eigen::Vector3d::Constant(-n.radius), Eigen::Vector3d::Constant(n.radius)};
        } else if constexpr (std::is_same_v<T, BoxNode>) {
          return {-n.half, n.half};
        } else if constexpr (std::is_same_v<T, TorusNode>) {
          const Eigen::Vector3d e(n.major + n.minor, n.minor, n.major + n.minor);
          return {-e, e};
        } else if constexpr (std::is_same_v<T, UnionNode>) {
          return merge(node_bounds(*n.a), node_bounds(*n.b));
        } else if constexpr (std::is_same_v<T, IntersectionNode>) {
          const Aabb a = node_bounds(*n.a);
          const Aabb b = node_bounds(*n.b);
          return {a.lo.cwiseMax(b.lo), a.hi.cwiseMin(b.hi)};
        } else if constexpr (std::is_same_v<T, SmoothUnionNode>) {
          Aabb m = merge(node_bounds(*n.a), node_bounds(*n.b));
          m.lo.array() -= 0.25 * n.k;
          m.hi.array() += 0.25 * n.k;
          return m;
        } else {
          const Aabb c = node_bounds(*n.child);
          Aabb out{Eigen::Vector3d::Constant(INFINITY), Eigen::Vector3d::Constant(-INFINITY)};
          for (int i = 0; i < 8; ++i) {
            const Eigen::Vector3d corner((i & 1) ? c.hi.x() : c.lo.x(), (i & 2) ? c.hi.y() : c.lo.y(),
                                         (i & 4) ? c.hi.z() : c.lo.z());
            const Eigen::Vector3d w = n.scale * (n.rotation * corner) + n.translation;
            out.lo = out.lo.cwiseMin(w);
            out.hi = out.hi.cwiseMax(w);
          }
          return out;
        }
      },
      node.v);
}

double node_radius(const AnalyticShape::Node& node, const Eigen::Vector3d& c) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, SphereNode>) {
          return c.norm() + n.radius;
        } else if constexpr (std::is_same_v<T, BoxNode>) {
          double r = 0.0;
          for (int i = 0; i < 8; ++i) {
            const Eigen::Vector3d corner((i & 1) ? n.half.x() : -n.half.x(), (i & 2) ? n.half.y() : -n.half.y(),
                                         (i & 4) ? n.half.z() : -n.half.z());
            r = std::max(r, (corner - c).norm());
          }
          return r;
        } else if constexpr (std::is_same_v<T, TorusNode>) {
          return std::hypot(c.y(), std::hypot(c.x(), c.z()) + n.major) + n.minor;
        } else if constexpr (std::is_same_v<T, UnionNode>) {
          return std::max(node_radius(*n.a, c), node_radius(*n.b, c));
        } else if constexpr (std::is_same_v<T, IntersectionNode>) {
          return std::min(node_radius(*n.a, c), node_radius(*n.b, c));
        } else if constexpr (std::is_same_v<T, SmoothUnionNode>) {
          return std::max(node_radius(*n.a, c), node_radius(*n.b, c)) + 0.25 * n.k;
        } else {
          const Eigen::Vector3d local = n.rotation.transpose() * (c - n.translation) / n.scale;
          return n.scale * node_radius(*n.child, local);
        }
      },
      node.v);
}

void require(const AnalyticShape& s) {
  if (!s.valid()) throw DomainError("empty AnalyticShape");
}

}  // namespace

AnalyticShape AnalyticShape::sphere(double radius) {
  if (!(radius > 0)) throw DomainError("sphere radius must be positive");
  return AnalyticShape(make(SphereNode{radius}));
}

AnalyticShape AnalyticShape::box(const Eigen::Vector3d& half_extents) {
  if (!(half_extents.array() > 0).all()) throw DomainError("box half extents must be positive");
  return AnalyticShape(make(BoxNode{half_extents}));
}

AnalyticShape AnalyticShape::torus(double major_radius, double minor_radius) {
  if (!(major_radius > 0) || !(minor_radius > 0)) throw DomainError("torus radii must be positive");
  return AnalyticShape(make(TorusNode{major_radius, minor_radius}));
}

AnalyticShape AnalyticShape::unite(const AnalyticShape& a, const AnalyticShape& b) {
  require(a);
  require(b);
  AnalyticShape s(make(UnionNode{a.root_, b.root_}));
  s.color_ = a.color_ ? a.color_ : b.color_;
  return s;
}

AnalyticShape AnalyticShape::intersect(const AnalyticShape& a, const AnalyticShape& b) {
  require(a);
  require(b);
  AnalyticShape s(make(IntersectionNode{a.root_, b.root_}));
  s.color_ = a.color_ ? a.color_ : b.color_;
  return s;
}

AnalyticShape AnalyticShape::smooth_unite(const AnalyticShape& a, const AnalyticShape& b, double k) {
  require(a);
  require(b);
  if (!(k > 0)) throw DomainError("smooth union radius must be positive");
  AnalyticShape s(make(SmoothUnionNode{a.root_, b.root_, k}));
  s.color_ = a.color_ ? a.color_ : b.color_;
  return s;
}

AnalyticShape AnalyticShape::translated(const Eigen::Vector3d& t) const {
  require(*this);
  AnalyticShape s(make(TransformNode{root_, Eigen::Matrix3d::Identity(), t, 1.0}));
  if (color_) s.color_ = [c = color_, t](const Eigen::Vector3d& x) { return c(x - t); };
  return s;
}

AnalyticShape AnalyticShape::scaled(double factor) const {
  require(*this);
  if (!(factor > 0)) throw DomainError("scale factor must be positive");
  AnalyticShape s(make(TransformNode{root_, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), factor}));
  if (color_) s.color_ = [c = color_, factor](const Eigen::Vector3d& x) { return c(x / factor); };
  return s;
}

AnalyticShape AnalyticShape::rotated(const Eigen::Matrix3d& r) const {
  require(*this);
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > 1e-9 || r.determinant() < 0) {
    throw DomainError("rotation must be a proper orthonormal matrix");
  }
  AnalyticShape s(make(TransformNode{root_, r, Eigen::Vector3d::Zero(), 1.0}));
  if (color_) s.color_ = [c = color_, r](const Eigen::Vector3d& x) { return c(r.transpose() * x); };
  return s;
}

AnalyticShape AnalyticShape::with_color(ColorFn color) const {
  AnalyticShape s = *this;
  s.color_ = std::move(color);
  return s;
}

double AnalyticShape::sdf(const Eigen::Vector3d& x) const {
  require(*this);
  return node_sdf(*root_, x);
}

Eigen::Vector3d AnalyticShape::gradient(const Eigen::Vector3d& x) const {
  constexpr double h = 1e-6;
  Eigen::Vector3d g;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[a] = h;
    g[a] = (sdf(x + e) - sdf(x - e)) / (2 * h);
  }
  return g;
}

Eigen::Vector3d AnalyticShape::project_to_surface(const Eigen::Vector3d& x, int max_iterations) const {
  Eigen::Vector3d p = x;
  for (int i = 0; i < max_iterations; ++i) {
    const double s = sdf(p);
    if (std::abs(s) < 1e-12) break;
    const Eigen::Vector3d g = gradient(p);
    const double g2 = g.squaredNorm();
    if (g2 < 1e-20) break;
    p -= s * g / g2;
  }
  return p;
}

Eigen::Vector3d AnalyticShape::color(const Eigen::Vector3d& x) const {
  if (!color_) return Eigen::Vector3d::Constant(0.5);
  return color_(x).cwiseMax(0.0).cwiseMin(1.0);
}

Aabb AnalyticShape::bounds() const {
  require(*this);
  return node_bounds(*root_);
}

double AnalyticShape::bounding_radius(const Eigen::Vector3d& center) const {
  require(*this);
  return node_radius(*root_, center);
}

AnalyticShape normalize_to_unit(const AnalyticShape& shape, double target_radius) {
  const Aabb box = shape.bounds();
  if (!box.valid()) throw DomainError("normalize_to_unit: shape has empty bounds");
  const Eigen::Vector3d center = box.center();
  const double r = shape.bounding_radius(center);
  if (!(r > 1e-12) || !std::isfinite(r)) throw DomainError("normalize_to_unit: degenerate extent");
  return shape.translated(-center).scaled(target_radius / r);
}

PointNormalization normalize_points(Eigen::MatrixX3d& points, double target_radius) {
  if (points.rows() == 0) throw DomainError("normalize_points: empty point set");
  const Eigen::Vector3d lo = points.colwise().minCoeff();
  const Eigen::Vector3d hi = points.colwise().maxCoeff();
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double r = (points.rowwise() - center.transpose()).rowwise().norm().maxCoeff();
  if (!(r > 1e-12)) throw DomainError("normalize_points: degenerate extent");
  const double scale = target_radius / r;
  points = (points.rowwise() - center.transpose()) * scale;
  return {center, scale};
}

SurfaceSamples sample_surface(const AnalyticShape& shape, std::size_t count, std::uint64_t seed) {
  const Aabb box = shape.bounds();
  const Eigen::Vector3d extent = box.hi - box.lo;
  const double band = 0.005 * extent.maxCoeff();
  const Eigen::Vector3d lo = box.lo.array() - band;
  const Eigen::Vector3d span = extent.array() + 2 * band;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SurfaceSamples out;
  out.points.resize(static_cast<Eigen::Index>(count), 3);
  out.normals.resize(static_cast<Eigen::Index>(count), 3);
  out.colors.resize(static_cast<Eigen::Index>(count), 3);
  std::size_t filled = 0;
  std::size_t attempts = 0;
  const std::size_t budget = 100000 * std::max<std::size_t>(count, 1);
  while (filled < count) {
    if (++attempts > budget) throw NumericalError("sample_surface: rejection budget exhausted");
    const Eigen::Vector3d x(lo.x() + span.x() * u(rng), lo.y() + span.y() * u(rng), lo.z() + span.z() * u(rng));
    if (std::abs(shape.sdf(x)) > band) continue;
    const Eigen::Vector3d p = shape.project_to_surface(x);
    if (std::abs(shape.sdf(p)) > 1e-9) continue;
    const auto r = static_cast<Eigen::Index>(filled++);
    out.points.row(r) = p;
    out.normals.row(r) = shape.normal(p);
    out.colors.row(r) = shape.color(p);
  }
  return out;
}

}  // namespace refine

#pragma once

// Independent reference implementations used only by tests. They are
// deliberately naive: per-bit loops, exhaustive searches, closed forms.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

inline std::uint64_t interleave(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz, int lod) {
  std::uint64_t code = 0;
  for (int b = 0; b < lod; ++b) {
    code |= static_cast<std::uint64_t>((ix >> b) & 1u) << (3 * b);
    code |= static_cast<std::uint64_t>((iy >> b) & 1u) << (3 * b + 1);
    code |= static_cast<std::uint64_t>((iz >> b) & 1u) << (3 * b + 2);
  }
  return code;
}

inline std::set<std::array<int, 3>> dilate_cells(const std::set<std::array<int, 3>>& cells, int res) {
  std::set<std::array<int, 3>> out;
  for (const auto& c : cells) {
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const std::array<int, 3> n{c[0] + dx, c[1] + dy, c[2] + dz};
          if (n[0] >= 0 && n[1] >= 0 && n[2] >= 0 && n[0] < res && n[1] < res && n[2] < res) out.insert(n);
        }
  }
  return out;
}

/// prod(1 - |x - c| / cell) for a lattice site center c.
inline double trilinear_weight(const Eigen::Vector3d& x, const Eigen::Vector3d& c, double cell) {
  double w = 1;
  for (int a = 0; a < 3; ++a) w *= std::max(0.0, 1.0 - std::abs(x[a] - c[a]) / cell);
  return w;
}

/// Slab test written independently: parametric clipping per axis.
inline std::optional<std::pair<double, double>> slab(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                                     const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double enter = 0.0;
  double exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    const double t1 = (lo[a] - o[a]) / d[a];
    const double t2 = (hi[a] - o[a]) / d[a];
    enter = std::max(enter, std::min(t1, t2));
    exit = std::min(exit, std::max(t1, t2));
  }
  if (!(exit > enter)) return std::nullopt;
  return std::make_pair(enter, exit);
}

inline double brute_chamfer(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b) {
  auto directed = [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d& q) {
    double acc = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < q.rows(); ++j) best = std::min(best, (p.row(i) - q.row(j)).squaredNorm());
      acc += best;
    }
    return acc / static_cast<double>(p.rows());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

inline double brute_nc(const Eigen::MatrixX3d& ap, const Eigen::MatrixX3d& an, const Eigen::MatrixX3d& bp,
                       const Eigen::MatrixX3d& bn) {
  auto directed = [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& q,
                     const Eigen::MatrixX3d& m) {
    double acc = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index j = 0; j < q.rows(); ++j) {
        const double d = (p.row(i) - q.row(j)).squaredNorm();
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      acc += std::abs(n.row(i).dot(m.row(arg)));
    }
    return acc / static_cast<double>(p.rows());
  };
  return 0.5 * (directed(ap, an, bp, bn) + directed(bp, bn, ap, an));
}

/// Emission-absorption integral along [0, L] of a piecewise-constant field
/// given as consecutive segments (length, sigma, rgb), exact in fp64.
struct Segment {
  double length;
  double sigma;
  Eigen::Vector3d rgb;
};

inline std::pair<Eigen::Vector3d, double> exact_composite(const std::vector<Segment>& segments) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double transmittance = 1;
  for (const auto& s : segments) {
    const double absorbed = 1.0 - std::exp(-s.sigma * s.length);
    c += transmittance * absorbed * s.rgb;
    transmittance *= 1.0 - absorbed;
  }
  return {c, 1.0 - transmittance};
}

/// Central differences of f over every entry of x.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                         double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

}  // namespace oracle

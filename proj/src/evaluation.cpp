#include "refine/evaluation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "refine/errors.hpp"
#include "refine/expansion.hpp"

namespace refine {

KdTree::KdTree(const Eigen::MatrixX3d& points) : points_(points), order_(static_cast<std::size_t>(points.rows())) {
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  build(0, order_.size(), 0);
}

void KdTree::build(std::size_t lo, std::size_t hi, int depth) {
  if (hi - lo <= 1) return;
  const int axis = depth % 3;
  const std::size_t mid = (lo + hi) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](Eigen::Index a, Eigen::Index b) { return points_(a, axis) < points_(b, axis); });
  build(lo, mid, depth + 1);
  build(mid + 1, hi, depth + 1);
}

void KdTree::search(std::size_t lo, std::size_t hi, int depth, const Eigen::Vector3d& q, Eigen::Index& best,
                    double& best_d2) const {
  if (lo >= hi) return;
  const std::size_t mid = (lo + hi) / 2;
  const Eigen::Index p = order_[mid];
  const double d2 = (points_.row(p).transpose() - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
    best_d2 = d2;
    best = p;
  }
  const int axis = depth % 3;
  const double diff = q[axis] - points_(p, axis);
  const bool left_first = diff < 0;
  if (left_first) {
    search(lo, mid, depth + 1, q, best, best_d2);
    if (diff * diff <= best_d2) search(mid + 1, hi, depth + 1, q, best, best_d2);
  } else {
    search(mid + 1, hi, depth + 1, q, best, best_d2);
    if (diff * diff <= best_d2) search(lo, mid, depth + 1, q, best, best_d2);
  }
}

std::pair<Eigen::Index, double> KdTree::nearest(const Eigen::Vector3d& q) const {
  Eigen::Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(0, order_.size(), 0, q, best, best_d2);
  return {best, best_d2};
}

namespace {

void require_points(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b, const char* what) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError(std::string(what) + ": point sets must be nonempty");
}

double directed_mean(const Eigen::MatrixX3d& from, const KdTree& to) {
  double acc = 0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) acc += to.nearest(from.row(i).transpose()).second;
  return acc / static_cast<double>(from.rows());
}

}  // namespace

double chamfer(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b) {
  require_points(a, b, "chamfer");
  const KdTree ta(a), tb(b);
  return 0.5 * (directed_mean(a, tb) + directed_mean(b, ta));
}

double normal_consistency(const Eigen::MatrixX3d& a_points, const Eigen::MatrixX3d& a_normals,
                          const Eigen::MatrixX3d& b_points, const Eigen::MatrixX3d& b_normals) {
  require_points(a_points, b_points, "normal_consistency");
  if (a_normals.rows() != a_points.rows() || b_normals.rows() != b_points.rows()) {
    throw DomainError("normal_consistency: one normal per point required");
  }
  auto directed = [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& qp,
                     const Eigen::MatrixX3d& qn) {
    const KdTree tree(qp);
    double acc = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const auto j = tree.nearest(p.row(i).transpose()).first;
      acc += std::abs(n.row(i).dot(qn.row(j)));
    }
    return acc / static_cast<double>(p.rows());
  };
  return 0.5 * (directed(a_points, a_normals, b_points, b_normals) + directed(b_points, b_normals, a_points, a_normals));
}

double psnr3d(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& target) {
  if (pred.rows() != target.rows()) throw DomainError("psnr3d: size mismatch");
  if (pred.rows() == 0) throw DomainError("psnr3d: empty input");
  const double mse = (pred - target).squaredNorm() / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double image_psnr(const Image& rendered, const Image& reference) {
  if (rendered.width != reference.width || rendered.height != reference.height ||
      rendered.rgb.rows() != reference.rgb.rows()) {
    throw DomainError("image_psnr: image dimensions differ");
  }
  return psnr3d(rendered.rgb.cast<double>(), reference.rgb.cast<double>());
}

std::vector<Eigen::RowVectorXf> latent_interpolate(const Eigen::RowVectorXf& a, const Eigen::RowVectorXf& b,
                                                   int steps) {
  if (a.size() != b.size()) throw DomainError("latent_interpolate: latent sizes differ");
  if (steps < 1) throw DomainError("latent_interpolate: steps must be >= 1");
  std::vector<Eigen::RowVectorXf> out;
  for (int i = 0; i <= steps; ++i) {
    if (i == 0) {
      out.push_back(a);
    } else if (i == steps) {
      out.push_back(b);
    } else {
      const double t = static_cast<double>(i) / steps;
      out.push_back(((1.0 - t) * a.cast<double>() + t * b.cast<double>()).cast<float>());
    }
  }
  return out;
}

PcaProjection latent_pca(const Eigen::MatrixXd& latents) {
  const Eigen::Index k = latents.rows();
  const Eigen::Index d = latents.cols();
  if (k < 3) throw DomainError("latent_pca: needs at least 3 latents");
  if (d < 2) throw DomainError("latent_pca: latents must have at least 2 dimensions");
  const Eigen::MatrixXd centered = latents.rowwise() - latents.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(k - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("latent_pca: eigen decomposition failed");
  PcaProjection out;
  out.axes.resize(d, 2);
  const Eigen::VectorXd& ev = solver.eigenvalues();  // ascending
  const double top = std::max(ev[d - 1], 0.0);
  for (int a = 0; a < 2; ++a) {
    Eigen::VectorXd axis = solver.eigenvectors().col(d - 1 - a);
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    out.axes.col(a) = axis;
    out.variance[a] = std::max(ev[d - 1 - a], 0.0);
  }
  if (!(out.variance[1] > 1e-12 * std::max(top, 1e-300))) {
    out.rank_deficient = true;
    out.axes.col(1).setZero();
    out.variance[1] = 0;
  }
  out.coords = centered * out.axes;
  return out;
}

OccupancyScore occupancy_f1(const SparseOctree& predicted, const SparseOctree& truth, int lod) {
  if (lod > predicted.max_lod() || lod > truth.max_lod()) throw DomainError("occupancy_f1: lod beyond octree depth");
  const auto p = predicted.empty() ? std::span<const std::uint64_t>() : predicted.cells(lod);
  const auto t = truth.empty() ? std::span<const std::uint64_t>() : truth.cells(lod);
  std::vector<std::uint64_t> common;
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::back_inserter(common));
  OccupancyScore s;
  const double tp = static_cast<double>(common.size());
  s.precision = p.empty() ? (t.empty() ? 1.0 : 0.0) : tp / static_cast<double>(p.size());
  s.recall = t.empty() ? 1.0 : tp / static_cast<double>(t.size());
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

ObjectMetrics evaluate_object(const ModelBundle& bundle, const FieldSampleSet& data, const EvalOptions& options) {
  const auto& cfg = bundle.config;
  ObjectMetrics m;
  m.id = data.id;
  const auto k = bundle.latents.index_of(data.id);
  const LatentOctree tree = expand_inference(bundle.nets, bundle.latents.latent(k).value(), cfg.max_lod);
  if (data.max_lod() >= cfg.max_lod) m.occupancy_f1 = occupancy_f1(tree.structure(), data.octree, cfg.max_lod).f1;
  const auto& surf = data.surface;
  if (cfg.field != FieldKind::Nerf) {
    const auto pts = isosurface_extract(bundle.nets, cfg, tree, options.iso);
    m.points = static_cast<std::size_t>(pts.points.rows());
    if (pts.points.rows() > 0 && surf.points.rows() > 0) {
      m.chamfer = chamfer(pts.points, surf.points);
      m.normal_consistency = normal_consistency(pts.points, pts.normals, surf.points, surf.normals);
    }
  }
  if (has_color(cfg.field) && surf.points.rows() > 0) {
    const MatrixXf x = surf.points.cast<float>();
    MatrixXf dirs;
    if (cfg.field == FieldKind::Nerf) dirs = (-surf.normals).cast<float>();
    const auto s = decode(bundle.nets, cfg, tree, x, cfg.field == FieldKind::Nerf ? &dirs : nullptr);
    m.psnr3d = psnr3d(s.colors.cast<double>(), surf.colors);
  }
  return m;
}

MetricReport evaluate(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data, const EvalOptions& options) {
  if (data.empty()) throw DomainError("evaluate: dataset has no objects");
  MetricReport report;
  for (const auto& d : data) report.objects.push_back(evaluate_object(bundle, d, options));
  return report;
}

ObjectMetrics MetricReport::aggregate() const {
  ObjectMetrics agg;
  agg.id = "mean";
  auto mean = [&](double ObjectMetrics::*field) {
    double acc = 0;
    int n = 0;
    for (const auto& o : objects) {
      if (std::isfinite(o.*field)) {
        acc += o.*field;
        ++n;
      }
    }
    return n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
  };
  agg.chamfer = mean(&ObjectMetrics::chamfer);
  agg.normal_consistency = mean(&ObjectMetrics::normal_consistency);
  agg.psnr3d = mean(&ObjectMetrics::psnr3d);
  agg.image_psnr = mean(&ObjectMetrics::image_psnr);
  agg.occupancy_f1 = mean(&ObjectMetrics::occupancy_f1);
  for (const auto& o : objects) agg.points += o.points;
  return agg;
}

void MetricReport::write_csv(std::ostream& out) const {
  out << "# chamfer: mean of the two directed means of squared nearest-neighbour distances (world units^2)\n"
         "# normal_consistency: mean |cos| between nearest-neighbour normals, both directions\n"
         "# psnr3d: dB of decoded colors at reference surface points, peak 1; inf = exact\n"
         "# image_psnr: dB, peak 1; occupancy_f1: finest-level cell F1 vs ground-truth octree\n"
         "# nan = not applicable to the field kind; last row aggregates finite values\n";
  out << "object,chamfer,normal_consistency,psnr3d,image_psnr,occupancy_f1,points\n";
  auto row = [&](const ObjectMetrics& m) {
    out << m.id << ',' << std::setprecision(9) << m.chamfer << ',' << m.normal_consistency << ',' << m.psnr3d << ','
        << m.image_psnr << ',' << m.occupancy_f1 << ',' << m.points << '\n';
  };
  for (const auto& o : objects) row(o);
  row(aggregate());
}

}  // namespace refine

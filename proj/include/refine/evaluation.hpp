#pragma once

#include <Eigen/Core>

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "refine/data.hpp"
#include "refine/networks.hpp"
#include "refine/rendering.hpp"

namespace refine {

/// Static 3-d tree over the rows of a point matrix (the matrix must outlive it).
class KdTree {
 public:
  explicit KdTree(const Eigen::MatrixX3d& points);
  /// Index of the nearest point and its squared distance.
  std::pair<Eigen::Index, double> nearest(const Eigen::Vector3d& q) const;

 private:
  void build(std::size_t lo, std::size_t hi, int depth);
  void search(std::size_t lo, std::size_t hi, int depth, const Eigen::Vector3d& q, Eigen::Index& best,
              double& best_d2) const;

  const Eigen::MatrixX3d& points_;
  std::vector<Eigen::Index> order_;
};

/// Mean of the two directed means of squared nearest-neighbour distances.
double chamfer(const Eigen::MatrixX3d& a, const Eigen::MatrixX3d& b);

/// Mean over both directions of |cos| between each normal and the normal of
/// its nearest neighbour in the other set.
double normal_consistency(const Eigen::MatrixX3d& a_points, const Eigen::MatrixX3d& a_normals,
                          const Eigen::MatrixX3d& b_points, const Eigen::MatrixX3d& b_normals);

/// 10 log10(1 / MSE) over all channels; +inf when the inputs are equal.
double psnr3d(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& target);
double image_psnr(const Image& rendered, const Image& reference);

/// steps + 1 latents (1 - t) a + t b for t = i / steps.
std::vector<Eigen::RowVectorXf> latent_interpolate(const Eigen::RowVectorXf& a, const Eigen::RowVectorXf& b, int steps);

struct PcaProjection {
  Eigen::MatrixX2d coords;   // K x 2
  Eigen::Vector2d variance;  // along each axis
  Eigen::MatrixX2d axes;     // D x 2, unit columns
  bool rank_deficient = false;
};

/// Projection onto the two leading principal axes of the mean-centred rows.
/// Each axis is signed so its largest-magnitude component is positive. When
/// the rows span fewer than two dimensions the second axis is zeroed and
/// `rank_deficient` is set.
PcaProjection latent_pca(const Eigen::MatrixXd& latents);

struct OccupancyScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Cell-set agreement of two octrees at one level.
OccupancyScore occupancy_f1(const SparseOctree& predicted, const SparseOctree& truth, int lod);

struct EvalOptions {
  IsoSurfaceOptions iso{.samples_per_voxel = 4, .iterations = 2, .tau = 0, .seed = 0};
};

struct ObjectMetrics {
  std::string id;
  double chamfer = std::numeric_limits<double>::quiet_NaN();
  double normal_consistency = std::numeric_limits<double>::quiet_NaN();
  double psnr3d = std::numeric_limits<double>::quiet_NaN();
  double image_psnr = std::numeric_limits<double>::quiet_NaN();
  double occupancy_f1 = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

/// Expands the object's latent and compares against its reference surface:
/// chamfer and normal consistency of the iso-surface points (sdf kinds),
/// 3D PSNR of decoded colors at the reference points (color kinds) and
/// occupancy F1 at the finest level.
ObjectMetrics evaluate_object(const ModelBundle& bundle, const FieldSampleSet& data, const EvalOptions& options = {});

struct MetricReport {
  std::vector<ObjectMetrics> objects;
  /// Mean over objects of each finite metric.
  ObjectMetrics aggregate() const;
  void write_csv(std::ostream& out) const;
};

MetricReport evaluate(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data,
                      const EvalOptions& options = {});

}  // namespace refine

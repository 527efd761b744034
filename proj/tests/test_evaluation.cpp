#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "refine/evaluation.hpp"

using namespace refine;

namespace {

Eigen::MatrixX3d cloud(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixX3d p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

Eigen::MatrixX3d unit_rows(Eigen::MatrixX3d m) {
  m.rowwise().normalize();
  return m;
}

}  // namespace

TEST_CASE("kd-tree nearest neighbour equals brute force") {
  const auto pts = cloud(500, 1);
  const KdTree tree(pts);
  const auto queries = cloud(200, 2);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const Eigen::Vector3d q = queries.row(i).transpose();
    Eigen::Index best = 0;
    (pts.rowwise() - q.transpose()).rowwise().squaredNorm().minCoeff(&best);
    const auto [idx, d2] = tree.nearest(q);
    CHECK(idx == best);
    CHECK(d2 == doctest::Approx((pts.row(best).transpose() - q).squaredNorm()));
  }
}

TEST_CASE("chamfer and normal consistency match brute force") {
  const auto a = cloud(300, 3);
  const auto b = cloud(200, 4);
  const auto na = unit_rows(cloud(300, 5));
  const auto nb = unit_rows(cloud(200, 6));
  CHECK(chamfer(a, b) == doctest::Approx(oracle::brute_chamfer(a, b)).epsilon(1e-12));
  CHECK(normal_consistency(a, na, b, nb) == doctest::Approx(oracle::brute_nc(a, na, b, nb)).epsilon(1e-12));
  CHECK(chamfer(a, a) == 0.0);
  CHECK(normal_consistency(a, na, a, na) == doctest::Approx(1.0));

  Eigen::MatrixX3d p(1, 3), q(1, 3);
  p << 0, 0, 0;
  q << 1, 0, 0;
  CHECK(chamfer(p, q) == 1.0);
}

TEST_CASE("psnr values") {
  Eigen::MatrixX3d a = Eigen::MatrixX3d::Constant(10, 3, 0.5);
  Eigen::MatrixX3d b = a.array() + 0.1;
  CHECK(psnr3d(a, b) == doctest::Approx(20.0));
  CHECK(std::isinf(psnr3d(a, a)));

  Image x, y;
  x.width = y.width = 2;
  x.height = y.height = 1;
  x.rgb = MatrixXf::Zero(2, 3);
  y.rgb = MatrixXf::Constant(2, 3, 0.01f);
  CHECK(image_psnr(x, y) == doctest::Approx(40.0).epsilon(1e-5));
}

TEST_CASE("latent interpolation endpoints are exact") {
  Eigen::RowVectorXf a(3), b(3);
  a << 1, 2, 3;
  b << -1, 0.5f, 7;
  const auto path = latent_interpolate(a, b, 4);
  REQUIRE(path.size() == 5);
  CHECK(path.front() == a);
  CHECK(path.back() == b);
  CHECK(path[2].isApprox(0.5f * (a + b)));
  CHECK_THROWS_AS(latent_interpolate(a, b, 0), DomainError);
}

TEST_CASE("pca recovers a planted two-dimensional embedding") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  const int k = 12, d = 16;
  Eigen::MatrixXd planted(k, 2);
  for (int i = 0; i < k; ++i) {
    planted(i, 0) = 3.0 * n(rng);
    planted(i, 1) = 1.0 * n(rng);
  }
  planted.rowwise() -= planted.colwise().mean();
  Eigen::MatrixXd basis(d, 2);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = n(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, 2);
  Eigen::RowVectorXd offset(d);
  for (int i = 0; i < d; ++i) offset[i] = n(rng);
  const Eigen::MatrixXd latents = (planted * q.transpose()).rowwise() + offset;

  const auto pca = latent_pca(latents);
  CHECK_FALSE(pca.rank_deficient);
  // Orthogonal Procrustes: best rotation/reflection from the recovered to the planted coordinates.
  const Eigen::Matrix2d m = pca.coords.transpose() * planted;
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix2d r = svd.matrixU() * svd.matrixV().transpose();
  const double err = (pca.coords * r - planted).norm() / planted.norm();
  CHECK(err < 1e-6);
  CHECK(pca.variance[0] >= pca.variance[1]);

  Eigen::MatrixXd line(5, 4);
  for (int i = 0; i < 5; ++i) line.row(i) = Eigen::RowVector4d(1, 2, 3, 4) * i;
  CHECK(latent_pca(line).rank_deficient);
  CHECK_THROWS_AS(latent_pca(Eigen::MatrixXd::Zero(2, 4)), DomainError);
}

TEST_CASE("occupancy f1") {
  std::vector<std::vector<std::uint64_t>> a(2), b(2);
  a[1] = {0, 1, 2, 3};
  b[1] = {2, 3, 4, 5};
  const auto s = occupancy_f1(SparseOctree::from_cells(1, a), SparseOctree::from_cells(1, b), 1);
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));
  const auto same = occupancy_f1(SparseOctree::from_cells(1, a), SparseOctree::from_cells(1, a), 1);
  CHECK(same.f1 == 1.0);
}

TEST_CASE("metric report aggregates finite values and writes csv") {
  MetricReport r;
  ObjectMetrics m1, m2;
  m1.id = "a";
  m1.chamfer = 1e-3;
  m1.occupancy_f1 = 1.0;
  m2.id = "b";
  m2.chamfer = 3e-3;
  r.objects = {m1, m2};
  const auto agg = r.aggregate();
  CHECK(agg.id == "mean");
  CHECK(agg.chamfer == doctest::Approx(2e-3));
  CHECK(agg.occupancy_f1 == doctest::Approx(1.0));
  CHECK(std::isnan(agg.psnr3d));
  std::ostringstream out;
  r.write_csv(out);
  const auto text = out.str();
  CHECK(text.find("object,chamfer,normal_consistency,psnr3d,image_psnr,occupancy_f1,points") != std::string::npos);
  CHECK(text.find("\nmean,") != std::string::npos);
}

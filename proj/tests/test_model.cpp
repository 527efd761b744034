#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "refine/decoders.hpp"
#include "refine/expansion.hpp"
#include "refine/fusion.hpp"
#include "refine/networks.hpp"

using namespace refine;

namespace {

ModelConfig small_config(FieldKind kind, int max_lod = 3) {
  ModelConfig c;
  c.field = kind;
  c.latent_dim = 8;
  c.max_lod = max_lod;
  c.subdivision_hidden = 32;
  c.head_hidden = {16, 16};
  return c;
}

// Forces the occupancy head to a constant logit.
void force_occupancy(RefineNetworks& nets, float logit) {
  const auto last = nets.occupancy.layer_count() - 1;
  nets.occupancy.weight(last).mutable_value().setZero();
  nets.occupancy.bias(last).mutable_value().setConstant(logit);
}

MatrixXf random_points(Eigen::Index n, std::uint64_t seed, float range = 0.95f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-range, range);
  MatrixXf x(n, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

}  // namespace

TEST_CASE("siren initialization bounds and variance") {
  std::mt19937_64 rng(7);
  const SirenMlp mlp({64, 256, 256, 1}, Activation::Sine, 30.0f, rng);
  CHECK(mlp.layer_count() == 3);
  CHECK(mlp.weight(0).value().cwiseAbs().maxCoeff() <= 1.0f / 64.0f);
  const float hidden_bound = std::sqrt(6.0f / 256.0f) / 30.0f;
  const auto& w1 = mlp.weight(1).value();
  CHECK(w1.cwiseAbs().maxCoeff() <= hidden_bound);
  const double var = w1.cwiseAbs2().mean();
  CHECK(var == doctest::Approx(hidden_bound * hidden_bound / 3.0).epsilon(0.05));

  std::mt19937_64 rng2(7);
  const SirenMlp relu({64, 256, 1}, Activation::Relu, 30.0f, rng2);
  CHECK(relu.weight(0).value().cwiseAbs().maxCoeff() <= std::sqrt(6.0f / 64.0f));
  CHECK(relu.weight(0).value().cwiseAbs().maxCoeff() > 1.0f / 64.0f);
}

TEST_CASE("network shapes and parameter names") {
  for (auto kind : {FieldKind::Sdf, FieldKind::SdfRgb, FieldKind::Nerf}) {
    const auto cfg = small_config(kind);
    const auto nets = RefineNetworks::create(cfg, 1);
    CHECK(nets.subdivision.dims() == std::vector<int>{8, 32, 64});
    CHECK(nets.occupancy.input_dim() == 8);
    CHECK(nets.occupancy.output_dim() == 1);
    CHECK(nets.geometry.input_dim() == 24);
    CHECK(nets.color.empty() == (kind == FieldKind::Sdf));
    if (kind == FieldKind::Nerf) CHECK(nets.color.input_dim() == 27);
    if (kind == FieldKind::SdfRgb) CHECK(nets.color.input_dim() == 24);
    const auto named = nets.named_parameters();
    CHECK(named.front().first == "phi.0.weight");
    std::size_t total = 0;
    for (const auto& [name, t] : named) total += static_cast<std::size_t>(t.size());
    CHECK(total == nets.parameter_count());
  }
  auto cfg = small_config(FieldKind::Sdf);
  cfg.fusion = FusionKind::Sum;
  CHECK(RefineNetworks::create(cfg, 1).geometry.input_dim() == 8);
}

TEST_CASE("same seed gives the same networks") {
  const auto cfg = small_config(FieldKind::SdfRgb);
  const auto a = RefineNetworks::create(cfg, 42);
  const auto b = RefineNetworks::create(cfg, 42);
  const auto c = RefineNetworks::create(cfg, 43);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pc = c.parameters();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i].value() == pb[i].value();
    any_diff = any_diff || pa[i].value() != pc[i].value();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("phi output rows are children in Morton order") {
  const auto cfg = small_config(FieldKind::Sdf);
  const auto nets = RefineNetworks::create(cfg, 3);
  const MatrixXf parents = MatrixXf::Random(2, 8);
  Tapef tape(false);
  const auto out = phi_expand(tape, nets, Tensorf::constant(parents));
  CHECK(out.rows() == 16);
  CHECK(out.cols() == 8);
  const auto raw = nets.subdivision.forward(tape, Tensorf::constant(parents));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 8; ++c) CHECK(out.value().row(8 * r + c) == raw.value().block(r, 8 * c, 1, 8));
}

TEST_CASE("zero weights give constant bias outputs") {
  const auto cfg = small_config(FieldKind::Sdf);
  auto nets = RefineNetworks::create(cfg, 3);
  for (std::size_t l = 0; l < nets.geometry.layer_count(); ++l) nets.geometry.weight(l).mutable_value().setZero();
  Tapef tape(false);
  const auto y = nets.geometry.forward(tape, Tensorf::constant(MatrixXf::Random(5, 24)));
  for (Eigen::Index i = 1; i < 5; ++i) CHECK(y.value()(i, 0) == y.value()(0, 0));
}

TEST_CASE("nerf color head requires view directions") {
  const auto cfg = small_config(FieldKind::Nerf);
  const auto nets = RefineNetworks::create(cfg, 3);
  Tapef tape(false);
  const auto fused = Tensorf::constant(MatrixXf::Random(4, 24));
  CHECK_THROWS_AS(xi_color(tape, nets, FieldKind::Nerf, fused, std::nullopt), DomainError);
  const auto rgb = xi_color(tape, nets, FieldKind::Nerf, fused, Tensorf::constant(MatrixXf::Random(4, 3)));
  CHECK(rgb.value().minCoeff() >= 0.0f);
  CHECK(rgb.value().maxCoeff() <= 1.0f);
  const auto sigma = psi_geometry(tape, nets, FieldKind::Nerf, fused);
  CHECK(sigma.value().minCoeff() >= 0.0f);
}

TEST_CASE("inference expansion with everything occupied is a full tree") {
  auto nets = RefineNetworks::create(small_config(FieldKind::Sdf), 5);
  force_occupancy(nets, 10.0f);
  const auto tree = expand_inference(nets, MatrixXf::Random(1, 8), 3);
  CHECK(tree.total_cells() == 585);
  CHECK(tree.levels[3].size() == 512);
  CHECK_FALSE(tree.degenerate);
  CHECK(tree.structure().is_consistent());
  for (const auto& level : tree.levels) CHECK(std::is_sorted(level.codes.begin(), level.codes.end()));
}

TEST_CASE("inference expansion with everything pruned is degenerate") {
  auto nets = RefineNetworks::create(small_config(FieldKind::Sdf), 5);
  force_occupancy(nets, -10.0f);
  const auto tree = expand_inference(nets, MatrixXf::Random(1, 8), 3);
  CHECK(tree.degenerate);
  CHECK(tree.total_cells() == 1);
  CHECK_THROWS_AS(expand_inference(nets, MatrixXf::Random(2, 8), 3), DomainError);
}

TEST_CASE("training expansion along one ground-truth path") {
  auto nets = RefineNetworks::create(small_config(FieldKind::Sdf, 4), 5);
  std::vector<std::vector<std::uint64_t>> levels(5);
  levels[4].push_back(morton_encode(9, 2, 13, 4).code);
  const auto gt = SparseOctree::from_cells(4, levels);
  Tapef tape;
  const auto root = Tensorf::parameter(MatrixXf::Random(1, 8));
  const auto exp = expand_training(tape, nets, root, gt, 4);
  CHECK(exp.logits.rows() == 32);
  CHECK(exp.targets.rows() == 32);
  CHECK(exp.targets.sum() == 4.0f);
  for (int lod = 1; lod <= 4; ++lod) CHECK(exp.tree.levels[lod].size() == 1);
  CHECK(exp.tree.levels[4].codes[0] == morton_encode(9, 2, 13, 4).code);

  tape.backward(tape.sum(exp.logits));
  CHECK(root.reached());
  CHECK(root.grad().allFinite());
}

TEST_CASE("training expansion rejects shallow ground truth") {
  auto nets = RefineNetworks::create(small_config(FieldKind::Sdf, 4), 5);
  std::vector<std::vector<std::uint64_t>> levels(3);
  levels[2].push_back(0);
  Tapef tape;
  CHECK_THROWS_AS(expand_training(tape, nets, Tensorf::constant(MatrixXf::Random(1, 8)),
                                  SparseOctree::from_cells(2, levels), 4),
                  DomainError);
}

namespace {

// Brute force: every stored cell contributes weight * latent.
MatrixXf brute_level(const LatentOctree& tree, int lod, const MatrixXf& x) {
  const auto& level = tree.levels[static_cast<std::size_t>(lod)];
  const double cell = 2.0 / static_cast<double>(1 << lod);
  MatrixXf out = MatrixXf::Zero(x.rows(), tree.latent_dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Vector3d p = x.row(i).cast<double>().transpose();
    for (std::size_t r = 0; r < level.size(); ++r) {
      const double w = oracle::trilinear_weight(p, cell_frame({level.codes[r], lod}).center, cell);
      out.row(i) += static_cast<float>(w) * level.latents.value().row(static_cast<Eigen::Index>(r));
    }
  }
  return out;
}

LatentOctree partial_tree(std::uint64_t seed) {
  auto nets = RefineNetworks::create(small_config(FieldKind::Sdf), seed);
  // Near-zero logit bias with random weights prunes roughly half the cells.
  const auto last = nets.occupancy.layer_count() - 1;
  nets.occupancy.bias(last).mutable_value().setZero();
  nets.occupancy.weight(last).mutable_value() *= 30.0f;
  return expand_inference(nets, MatrixXf::Random(1, 8), 3);
}

}  // namespace

TEST_CASE("interpolation matches the brute-force oracle") {
  const auto tree = partial_tree(11);
  REQUIRE(tree.levels[3].size() > 0);
  REQUIRE(tree.levels[3].size() < 512);
  const MatrixXf x = random_points(300, 4, 1.0f);
  Tapef tape(false);
  for (int lod = 1; lod <= 3; ++lod) {
    const auto got = interpolate_lod(tape, tree, lod, Tensorf::constant(x));
    const auto want = brute_level(tree, lod, x);
    CHECK((got.latents.value() - want).cwiseAbs().maxCoeff() <= 1e-5f);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const bool zero = want.row(i).squaredNorm() == 0.0f;
      if (got.out_of_field[static_cast<std::size_t>(i)]) CHECK(zero);
    }
  }
}

TEST_CASE("sum fusion equals block-summed concat fusion") {
  const auto tree = partial_tree(12);
  const MatrixXf x = random_points(50, 5);
  Tapef tape(false);
  const auto cat = fuse_query(tape, tree, Tensorf::constant(x), FusionKind::Concat);
  const auto sum = fuse_query(tape, tree, Tensorf::constant(x), FusionKind::Sum);
  CHECK(cat.fused.cols() == 24);
  CHECK(sum.fused.cols() == 8);
  const MatrixXf blocks = cat.fused.value().leftCols(8) + cat.fused.value().middleCols(8, 8) +
                          cat.fused.value().rightCols(8);
  CHECK((blocks - sum.fused.value()).cwiseAbs().maxCoeff() <= 1e-5f);
  CHECK(cat.out_of_field == sum.out_of_field);
}

TEST_CASE("sdf normals agree with finite differences") {
  auto cfg = small_config(FieldKind::Sdf);
  auto nets = RefineNetworks::create(cfg, 21);
  force_occupancy(nets, 10.0f);
  const auto tree = expand_inference(nets, MatrixXf::Random(1, 8), 3);
  const MatrixXf x = random_points(100, 6, 0.7f);
  const auto ns = sdf_normals(nets, cfg, tree, x);
  const float h = 1e-3f;
  int agree = 0, checked = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (ns.degenerate[static_cast<std::size_t>(i)]) continue;
    Eigen::Vector3f g;
    for (int a = 0; a < 3; ++a) {
      MatrixXf xp = x.row(i), xm = x.row(i);
      xp(0, a) += h;
      xm(0, a) -= h;
      g[a] = (decode(nets, cfg, tree, xp).geometry[0] - decode(nets, cfg, tree, xm).geometry[0]) / (2 * h);
    }
    if (g.norm() < 1e-3f) continue;
    ++checked;
    if (g.normalized().dot(ns.normals.row(i).transpose()) > 0.99f) ++agree;
    CHECK(ns.normals.row(i).norm() == doctest::Approx(1.0).epsilon(1e-4));
  }
  REQUIRE(checked > 50);
  // A few points sit on trilinear kinks where the two one-sided slopes differ.
  CHECK(agree >= checked * 95 / 100);
}

TEST_CASE("decode agrees with the tape-level decode") {
  auto cfg = small_config(FieldKind::SdfRgb);
  auto nets = RefineNetworks::create(cfg, 22);
  force_occupancy(nets, 10.0f);
  const auto tree = expand_inference(nets, MatrixXf::Random(1, 8), 3);
  const MatrixXf x = random_points(20, 7);
  const auto v = decode(nets, cfg, tree, x);
  Tapef tape(false);
  const auto t = decode_field(tape, nets, cfg, tree, Tensorf::constant(x));
  CHECK((v.geometry - t.geometry.value().col(0)).cwiseAbs().maxCoeff() <= 1e-6f);
  CHECK((v.colors - t.color->value()).cwiseAbs().maxCoeff() <= 1e-6f);
  const auto p = decode_point(nets, cfg, tree, x.row(3).transpose());
  REQUIRE(p.sdf);
  CHECK(*p.sdf == doctest::Approx(v.geometry[3]).epsilon(1e-5));
  CHECK_FALSE(p.density);
}

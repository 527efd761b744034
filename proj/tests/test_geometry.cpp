#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "refine/errors.hpp"
#include "refine/geometry.hpp"

using namespace refine;

TEST_CASE("morton encode small cases") {
  CHECK(morton_encode(0, 0, 0, 3).code == 0);
  CHECK(morton_encode(1, 1, 1, 1).code == 7);
  CHECK(morton_encode(3, 5, 1, 3).code == oracle::interleave(3, 5, 1, 3));
  CHECK(morton_encode(3, 5, 1, 3).code == 143);
  CHECK_THROWS_AS(morton_encode(8, 0, 0, 3), DomainError);
  CHECK_THROWS_AS(morton_encode(0, 0, 0, 21), DomainError);
}

TEST_CASE("morton decode and exhaustive round trip at lod 4") {
  CHECK(morton_decode({7, 1}) == std::array<std::uint32_t, 3>{1, 1, 1});
  CHECK(morton_decode({0, 5}) == std::array<std::uint32_t, 3>{0, 0, 0});
  for (std::uint32_t x = 0; x < 16; ++x)
    for (std::uint32_t y = 0; y < 16; ++y)
      for (std::uint32_t z = 0; z < 16; ++z) {
        const auto key = morton_encode(x, y, z, 4);
        REQUIRE(key.code == oracle::interleave(x, y, z, 4));
        REQUIRE(key.code < 4096);
        REQUIRE(morton_decode(key) == std::array<std::uint32_t, 3>{x, y, z});
      }
}

TEST_CASE("z-order equals lexicographic order of interleaved bits") {
  std::vector<std::pair<std::vector<int>, std::uint64_t>> cells;
  for (std::uint32_t x = 0; x < 8; ++x)
    for (std::uint32_t y = 0; y < 8; ++y)
      for (std::uint32_t z = 0; z < 8; ++z) {
        std::vector<int> bits;
        for (int b = 2; b >= 0; --b) {
          bits.push_back((z >> b) & 1);
          bits.push_back((y >> b) & 1);
          bits.push_back((x >> b) & 1);
        }
        cells.emplace_back(bits, morton_encode(x, y, z, 3).code);
      }
  std::sort(cells.begin(), cells.end());
  for (std::size_t i = 1; i < cells.size(); ++i) CHECK(cells[i - 1].second < cells[i].second);
}

TEST_CASE("children of a cell are 8c..8c+7") {
  const MortonKey k = morton_encode(2, 3, 1, 2);
  for (int i = 0; i < 8; ++i) {
    const auto c = k.child(i);
    CHECK(c.code == 8 * k.code + static_cast<std::uint64_t>(i));
    CHECK(c.parent() == k);
    const auto p = morton_decode(k);
    const auto q = morton_decode(c);
    CHECK(q[0] == 2 * p[0] + (i & 1));
    CHECK(q[1] == 2 * p[1] + ((i >> 1) & 1));
    CHECK(q[2] == 2 * p[2] + ((i >> 2) & 1));
  }
}

TEST_CASE("cell frames") {
  auto root = cell_frame({0, 0});
  CHECK(root.center.norm() == 0.0);
  CHECK(root.half_extent == 1.0);
  auto c7 = cell_frame({7, 1});
  CHECK(c7.center.isApprox(Eigen::Vector3d(0.5, 0.5, 0.5)));
  auto f = cell_frame(morton_encode(3, 5, 1, 3));
  CHECK(f.center.isApprox(Eigen::Vector3d(-0.125, 0.375, -0.625)));
  CHECK(f.half_extent == 0.125);
}

namespace {

SparseOctree single_cell(std::uint32_t x, std::uint32_t y, std::uint32_t z, int lod) {
  std::vector<std::vector<std::uint64_t>> levels(static_cast<std::size_t>(lod) + 1);
  levels[static_cast<std::size_t>(lod)].push_back(morton_encode(x, y, z, lod).code);
  return SparseOctree::from_cells(lod, levels);
}

}  // namespace

TEST_CASE("from_cells adds ancestors") {
  const auto t = single_cell(5, 2, 7, 3);
  CHECK(t.is_consistent());
  CHECK(t.count(0) == 1);
  CHECK(t.count(1) == 1);
  CHECK(t.count(2) == 1);
  CHECK(t.count(3) == 1);
}

TEST_CASE("dilation kernel and boundary clamp") {
  CHECK(dilate(single_cell(3, 3, 3, 3), 3).count(3) == 27);
  CHECK(dilate(single_cell(0, 0, 0, 3), 3).count(3) == 8);
  const auto d = dilate(single_cell(3, 3, 3, 3), 3);
  CHECK(d.is_consistent());
}

TEST_CASE("dilation of random sets matches brute-force neighbourhood union") {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> u(0, 15);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::array<int, 3>> cells;
    while (cells.size() < 10) cells.insert({u(rng), u(rng), u(rng)});
    std::vector<std::vector<std::uint64_t>> levels(5);
    for (const auto& c : cells) {
      levels[4].push_back(morton_encode(static_cast<std::uint32_t>(c[0]), static_cast<std::uint32_t>(c[1]),
                                        static_cast<std::uint32_t>(c[2]), 4)
                              .code);
    }
    const auto tree = dilate(SparseOctree::from_cells(4, levels), 4);
    const auto expected = oracle::dilate_cells(cells, 16);
    REQUIRE(tree.count(4) == expected.size());
    for (const auto& c : expected) {
      CHECK(tree.contains(morton_encode(static_cast<std::uint32_t>(c[0]), static_cast<std::uint32_t>(c[1]),
                                        static_cast<std::uint32_t>(c[2]), 4)));
    }
    CHECK(tree.is_consistent());
    const auto original = SparseOctree::from_cells(4, levels);
    for (auto code : original.cells(4)) CHECK(tree.contains({code, 4}));
  }
}

TEST_CASE("octree serialization round trip") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> u(0, 31);
  std::vector<std::vector<std::uint64_t>> levels(6);
  for (int i = 0; i < 200; ++i) {
    levels[5].push_back(morton_encode(static_cast<std::uint32_t>(u(rng)), static_cast<std::uint32_t>(u(rng)),
                                      static_cast<std::uint32_t>(u(rng)), 5)
                            .code);
  }
  const auto tree = SparseOctree::from_cells(5, levels);
  const auto bytes = tree.serialize();
  const auto back = SparseOctree::deserialize(bytes);
  CHECK(back == tree);

  // One byte per occupied parent, bit i = child i.
  std::size_t parents = 0;
  for (int lod = 0; lod < 5; ++lod) parents += tree.count(lod);
  CHECK(bytes.size() > parents);

  auto broken = bytes;
  broken.pop_back();
  CHECK_THROWS_AS(SparseOctree::deserialize(broken), IoError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(SparseOctree::deserialize(extra), IoError);

  const SparseOctree empty(3);
  CHECK(SparseOctree::deserialize(empty.serialize()) == empty);
}

TEST_CASE("trilinear weights") {
  SUBCASE("at a cell center") {
    const auto f = cell_frame(morton_encode(2, 5, 3, 3));
    const auto sites = trilinear_weights<double>(f.center, 3);
    int ones = 0;
    for (const auto& s : sites) {
      if (s.weight > 0.5) {
        CHECK(s.key == morton_encode(2, 5, 3, 3));
        CHECK(s.weight == doctest::Approx(1.0));
        ++ones;
      } else {
        CHECK(s.weight == doctest::Approx(0.0));
      }
    }
    CHECK(ones == 1);
  }
  SUBCASE("midpoint of two centers") {
    const auto a = cell_frame(morton_encode(2, 5, 3, 3)).center;
    const auto b = cell_frame(morton_encode(3, 5, 3, 3)).center;
    const auto sites = trilinear_weights<double>(0.5 * (a + b), 3);
    double wa = 0, wb = 0;
    for (const auto& s : sites) {
      if (s.key == morton_encode(2, 5, 3, 3)) wa = s.weight;
      if (s.key == morton_encode(3, 5, 3, 3)) wb = s.weight;
    }
    CHECK(wa == doctest::Approx(0.5));
    CHECK(wb == doctest::Approx(0.5));
  }
  SUBCASE("closed form on random queries") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.999, 0.999);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const Eigen::Vector3d x(u(rng), u(rng), u(rng));
      const auto sites = trilinear_weights<double>(x, 3);
      double total = 0;
      for (const auto& s : sites) {
        CHECK(s.weight >= 0);
        total += s.weight;
        if (!s.in_lattice) continue;
        const double w = oracle::trilinear_weight(x, cell_frame(s.key).center, 2.0 / 8.0);
        worst = std::max(worst, std::abs(w - s.weight));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(worst <= 1e-6);
  }
  SUBCASE("weight gradient matches finite differences") {
    const Eigen::Vector3d x(0.13, -0.41, 0.77);
    const auto sites = trilinear_weights<double>(x, 4);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const auto sp = trilinear_weights<double>(xp, 4);
      const auto sm = trilinear_weights<double>(xm, 4);
      for (int c = 0; c < 8; ++c) {
        CHECK(sites[c].weight_gradient[a] == doctest::Approx((sp[c].weight - sm[c].weight) / (2 * h)).epsilon(1e-5));
      }
    }
  }
}

#pragma once

// Morton-coded sparse octree over the cube [-1, 1]^3.
//
// Cell (ix, iy, iz) at level `lod` has Morton code with bit 3k holding bit k
// of ix, bit 3k+1 bit k of iy and bit 3k+2 bit k of iz. The children of code c
// are 8c .. 8c+7, so child index i carries its x/y/z offset in bits 0/1/2.

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "refine/errors.hpp"

namespace refine {

inline constexpr int kMaxLod = 20;

struct MortonKey {
  std::uint64_t code = 0;
  int lod = 0;

  MortonKey parent() const { return {code >> 3, lod - 1}; }
  MortonKey child(int i) const { return {(code << 3) | static_cast<std::uint64_t>(i), lod + 1}; }

  friend bool operator==(const MortonKey&, const MortonKey&) = default;
  friend auto operator<=>(const MortonKey&, const MortonKey&) = default;
};

MortonKey morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz, int lod);
std::array<std::uint32_t, 3> morton_decode(const MortonKey& key);

/// Number of cells per axis at `lod`.
inline std::uint32_t grid_resolution(int lod) { return std::uint32_t{1} << lod; }

template <typename Scalar>
struct CellFrame {
  Eigen::Matrix<Scalar, 3, 1> center;
  Scalar half_extent;
};

template <typename Scalar = double>
CellFrame<Scalar> cell_frame(const MortonKey& key) {
  const auto idx = morton_decode(key);
  const Scalar res = static_cast<Scalar>(grid_resolution(key.lod));
  CellFrame<Scalar> frame;
  for (int a = 0; a < 3; ++a) {
    frame.center[a] = Scalar(-1) + (Scalar(2) * static_cast<Scalar>(idx[a]) + Scalar(1)) / res;
  }
  frame.half_extent = Scalar(1) / res;
  return frame;
}

/// Occupied cells per level, each level a sorted set of Morton codes.
class SparseOctree {
 public:
  SparseOctree() : SparseOctree(0) {}
  explicit SparseOctree(int max_lod);

  /// Builds from arbitrary per-level code lists; ancestors are added so the
  /// result is hierarchy-consistent.
  static SparseOctree from_cells(int max_lod, std::vector<std::vector<std::uint64_t>> levels);

  int max_lod() const { return max_lod_; }
  bool empty() const { return levels_[0].empty(); }
  std::span<const std::uint64_t> cells(int lod) const { return levels_.at(lod); }
  std::size_t count(int lod) const { return levels_.at(lod).size(); }
  std::size_t total_count() const;
  bool contains(const MortonKey& key) const;
  /// Row of `key` within cells(key.lod), or -1.
  std::ptrdiff_t index_of(const MortonKey& key) const;

  /// Inserts `key` and all of its ancestors.
  void insert(const MortonKey& key);

  bool is_consistent() const;

  /// Byte form: u32 max_lod, u8 root flag, u32 byte count per level 0..M-1,
  /// then for every level the child-occupancy bytes of its occupied cells in
  /// Morton order (bit i = child i). All integers little-endian.
  std::vector<std::uint8_t> serialize() const;
  static SparseOctree deserialize(std::span<const std::uint8_t> bytes);

  friend bool operator==(const SparseOctree&, const SparseOctree&) = default;

 private:
  int max_lod_;
  std::vector<std::vector<std::uint64_t>> levels_;
};

/// 3x3x3 dilation of the cells at `lod`, clamped to the grid; ancestors of new
/// cells are added. Other levels are otherwise untouched.
SparseOctree dilate(const SparseOctree& tree, int lod);

template <typename Scalar>
struct LatticeSite {
  MortonKey key;
  Scalar weight;
  /// d(weight)/dx
  Eigen::Matrix<Scalar, 3, 1> weight_gradient;
  /// False when the site index falls outside the 2^lod grid.
  bool in_lattice;
};

/// The 8 cell centers at `lod` surrounding `x` and their trilinear weights.
/// Corner c uses offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1) from the lower site.
template <typename Scalar>
std::array<LatticeSite<Scalar>, 8> trilinear_weights(const Eigen::Matrix<Scalar, 3, 1>& x, int lod) {
  const Scalar res = static_cast<Scalar>(grid_resolution(lod));
  const Scalar scale = res / Scalar(2);
  std::array<std::int64_t, 3> lower{};
  std::array<Scalar, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const Scalar u = (x[a] + Scalar(1)) * scale - Scalar(0.5);
    const Scalar fl = std::floor(u);
    lower[a] = static_cast<std::int64_t>(fl);
    frac[a] = u - fl;
  }
  const auto n = static_cast<std::int64_t>(grid_resolution(lod));
  std::array<LatticeSite<Scalar>, 8> sites;
  for (int c = 0; c < 8; ++c) {
    std::array<Scalar, 3> g{};
    std::array<Scalar, 3> dg{};
    bool inside = true;
    std::array<std::uint32_t, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const int off = (c >> a) & 1;
      g[a] = off ? frac[a] : Scalar(1) - frac[a];
      dg[a] = off ? scale : -scale;
      const std::int64_t i = lower[a] + off;
      if (i < 0 || i >= n) {
        inside = false;
      } else {
        idx[a] = static_cast<std::uint32_t>(i);
      }
    }
    auto& site = sites[c];
    site.weight = g[0] * g[1] * g[2];
    site.weight_gradient = {dg[0] * g[1] * g[2], g[0] * dg[1] * g[2], g[0] * g[1] * dg[2]};
    site.in_lattice = inside;
    site.key = inside ? morton_encode(idx[0], idx[1], idx[2], lod) : MortonKey{0, lod};
  }
  return sites;
}

}  // namespace refine

#include "refine/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "refine/binary_io.hpp"

namespace refine {
namespace {

// Spreads the low 21 bits of v so that bit k lands on bit 3k.
std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | (v << 32)) & 0x1f00000000ffffULL;
  v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

std::uint64_t compact_bits(std::uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffffULL;
  return v;
}

void sort_unique(std::vector<std::uint64_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

void check_lod(int lod) {
  if (lod < 0 || lod > kMaxLod) {
    throw DomainError("lod " + std::to_string(lod) + " outside [0, " + std::to_string(kMaxLod) + "]");
  }
}

}  // namespace

MortonKey morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz, int lod) {
  check_lod(lod);
  const std::uint32_t n = grid_resolution(lod);
  if (ix >= n || iy >= n || iz >= n) {
    throw DomainError("grid index out of range for lod " + std::to_string(lod));
  }
  return {spread_bits(ix) | (spread_bits(iy) << 1) | (spread_bits(iz) << 2), lod};
}

std::array<std::uint32_t, 3> morton_decode(const MortonKey& key) {
  return {static_cast<std::uint32_t>(compact_bits(key.code)),
          static_cast<std::uint32_t>(compact_bits(key.code >> 1)),
          static_cast<std::uint32_t>(compact_bits(key.code >> 2))};
}

SparseOctree::SparseOctree(int max_lod) : max_lod_(max_lod) {
  check_lod(max_lod);
  levels_.resize(static_cast<std::size_t>(max_lod) + 1);
}

SparseOctree SparseOctree::from_cells(int max_lod, std::vector<std::vector<std::uint64_t>> levels) {
  SparseOctree tree(max_lod);
  levels.resize(static_cast<std::size_t>(max_lod) + 1);
  for (int lod = max_lod; lod >= 0; --lod) {
    auto& cur = levels[lod];
    sort_unique(cur);
    if (lod > 0) {
      auto& up = levels[lod - 1];
      up.reserve(up.size() + cur.size());
      for (auto c : cur) up.push_back(c >> 3);
    }
  }
  tree.levels_ = std::move(levels);
  return tree;
}

std::size_t SparseOctree::total_count() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

bool SparseOctree::contains(const MortonKey& key) const { return index_of(key) >= 0; }

std::ptrdiff_t SparseOctree::index_of(const MortonKey& key) const {
  if (key.lod < 0 || key.lod > max_lod_) return -1;
  const auto& l = levels_[key.lod];
  auto it = std::lower_bound(l.begin(), l.end(), key.code);
  if (it == l.end() || *it != key.code) return -1;
  return it - l.begin();
}

void SparseOctree::insert(const MortonKey& key) {
  if (key.lod < 0 || key.lod > max_lod_) throw DomainError("insert: lod out of range");
  MortonKey k = key;
  while (k.lod >= 0) {
    auto& l = levels_[k.lod];
    auto it = std::lower_bound(l.begin(), l.end(), k.code);
    if (it != l.end() && *it == k.code) break;
    l.insert(it, k.code);
    if (k.lod == 0) break;
    k = k.parent();
  }
}

bool SparseOctree::is_consistent() const {
  for (int lod = 0; lod <= max_lod_; ++lod) {
    const auto& l = levels_[lod];
    if (!std::is_sorted(l.begin(), l.end())) return false;
    if (std::adjacent_find(l.begin(), l.end()) != l.end()) return false;
    const std::uint64_t limit = lod == 0 ? 1 : (std::uint64_t{1} << (3 * lod));
    if (!l.empty() && l.back() >= limit) return false;
    if (lod > 0) {
      for (auto c : l) {
        if (!contains({c >> 3, lod - 1})) return false;
      }
    }
  }
  return true;
}

std::vector<std::uint8_t> SparseOctree::serialize() const {
  ByteWriter out;
  out.put<std::uint32_t>(static_cast<std::uint32_t>(max_lod_));
  out.put<std::uint8_t>(empty() ? 0 : 1);
  for (int lod = 0; lod < max_lod_; ++lod) out.put<std::uint32_t>(static_cast<std::uint32_t>(levels_[lod].size()));
  for (int lod = 0; lod < max_lod_; ++lod) {
    const auto& children = levels_[lod + 1];
    std::size_t j = 0;
    for (auto parent : levels_[lod]) {
      std::uint8_t byte = 0;
      while (j < children.size() && (children[j] >> 3) == parent) {
        byte |= static_cast<std::uint8_t>(1u << (children[j] & 7u));
        ++j;
      }
      out.put<std::uint8_t>(byte);
    }
  }
  return std::move(out).bytes();
}

SparseOctree SparseOctree::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto max_lod = in.get<std::uint32_t>();
  if (max_lod > static_cast<std::uint32_t>(kMaxLod)) throw IoError("octree: max lod out of range");
  SparseOctree tree(static_cast<int>(max_lod));
  const bool root = in.get<std::uint8_t>() != 0;
  std::vector<std::uint32_t> counts(max_lod);
  for (auto& c : counts) c = in.get<std::uint32_t>();
  if (root) tree.levels_[0].push_back(0);
  for (std::uint32_t lod = 0; lod < max_lod; ++lod) {
    const auto& parents = tree.levels_[lod];
    if (counts[lod] != parents.size()) throw IoError("octree: byte count does not match occupied parents");
    auto& children = tree.levels_[lod + 1];
    for (auto parent : parents) {
      const auto byte = in.get<std::uint8_t>();
      for (std::uint64_t i = 0; i < 8; ++i) {
        if (byte & (1u << i)) children.push_back((parent << 3) | i);
      }
    }
  }
  if (!in.at_end()) throw IoError("octree: trailing bytes");
  return tree;
}

SparseOctree dilate(const SparseOctree& tree, int lod) {
  if (lod < 0 || lod > tree.max_lod()) throw DomainError("dilate: lod out of range");
  const auto n = static_cast<std::int64_t>(grid_resolution(lod));
  std::vector<std::vector<std::uint64_t>> levels(static_cast<std::size_t>(tree.max_lod()) + 1);
  for (int l = 0; l <= tree.max_lod(); ++l) {
    auto src = tree.cells(l);
    levels[l].assign(src.begin(), src.end());
  }
  auto& target = levels[lod];
  target.reserve(target.size() * 27);
  for (auto code : tree.cells(lod)) {
    const auto idx = morton_decode({code, lod});
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::int64_t x = std::int64_t{idx[0]} + dx;
          const std::int64_t y = std::int64_t{idx[1]} + dy;
          const std::int64_t z = std::int64_t{idx[2]} + dz;
          if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) continue;
          target.push_back(morton_encode(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                         static_cast<std::uint32_t>(z), lod)
                               .code);
        }
      }
    }
  }
  return SparseOctree::from_cells(tree.max_lod(), std::move(levels));
}

}  // namespace refine

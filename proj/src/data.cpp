#include "refine/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "refine/binary_io.hpp"

namespace refine {

SparseOctree build_gt_octree(const AnalyticShape& shape, int max_lod) {
  if (max_lod < 0 || max_lod > kMaxLod) throw DomainError("build_gt_octree: max_lod out of range");
  const double sqrt3 = std::sqrt(3.0);
  auto crosses = [&](const MortonKey& key) {
    const auto frame = cell_frame<double>(key);
    return std::abs(shape.sdf(frame.center)) <= sqrt3 * frame.half_extent;
  };
  std::vector<std::vector<std::uint64_t>> levels(static_cast<std::size_t>(max_lod) + 1);
  if (!crosses({0, 0})) return SparseOctree(max_lod);
  levels[0].push_back(0);
  for (int lod = 1; lod <= max_lod; ++lod) {
    for (auto parent : levels[lod - 1]) {
      for (std::uint64_t i = 0; i < 8; ++i) {
        const MortonKey child{(parent << 3) | i, lod};
        if (crosses(child)) levels[lod].push_back(child.code);
      }
    }
  }
  SparseOctree tree = SparseOctree::from_cells(max_lod, std::move(levels));
  for (int lod = max_lod; lod >= 1; --lod) tree = dilate(tree, lod);
  return tree;
}

double NerfToyField::density(const Eigen::Vector3d& x) const {
  return sigma0 * std::clamp(-shape.sdf(x) / shell_width, 0.0, 1.0);
}

Eigen::Vector3d NerfToyField::color(const Eigen::Vector3d& x, const Eigen::Vector3d& /*d*/) const {
  const Eigen::Vector3d base = shape.color(x);
  if (!lambertian) return base;
  const Eigen::Vector3d n = shape.normal(x);
  const double shade = ambient + (1.0 - ambient) * std::max(0.0, n.dot(light_dir));
  return (base * shade).cwiseMin(1.0);
}

NerfToyField make_nerf_toy(const AnalyticShape& shape) {
  NerfToyField f;
  f.shape = shape;
  return f;
}

FieldSampleSet sample_bands(const AnalyticShape& shape, const SparseOctree& octree, std::size_t count, FieldKind kind,
                            std::uint64_t seed, const BandConfig& bands, const std::optional<NerfToyField>& nerf) {
  const int m = octree.max_lod();
  if (octree.empty() || octree.count(m) == 0) throw DomainError("sample_bands: octree has no occupied leaf cells");
  if (kind == FieldKind::Nerf && !nerf) throw DomainError("sample_bands: nerf samples need a NerfToyField");
  const double wide = bands.wide_width > 0 ? bands.wide_width : 1.0 / std::ldexp(1.0, m - 1);
  const double tight = bands.tight_width > 0 ? bands.tight_width : 1.0 / std::ldexp(1.0, m + 1);
  if (bands.volume_fraction < 0 || bands.volume_fraction > 1 || bands.tight_fraction < 0 || bands.tight_fraction > 1) {
    throw DomainError("sample_bands: fractions must lie in [0, 1]");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, octree.count(m) - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto leaves = octree.cells(m);

  const auto n_volume = static_cast<std::size_t>(std::llround(bands.volume_fraction * static_cast<double>(count)));
  const std::size_t rest = count - n_volume;
  const auto n_tight = static_cast<std::size_t>(std::llround(bands.tight_fraction * static_cast<double>(rest)));

  FieldSampleSet out;
  out.kind = kind;
  out.octree = octree;
  const auto n = static_cast<Eigen::Index>(count);
  out.coords.resize(n, 3);
  out.geometry.resize(n);
  if (has_color(kind)) out.colors.resize(n, 3);
  if (kind == FieldKind::Nerf) out.view_dirs.resize(n, 3);

  for (std::size_t i = 0; i < count; ++i) {
    const double width = i < n_volume ? INFINITY : (i < n_volume + n_tight ? tight : wide);
    Eigen::Vector3d x;
    double s = 0;
    std::size_t attempts = 0;
    for (;;) {
      if (++attempts > bands.attempts_per_sample) {
        throw NumericalError("sample_bands: rejection budget exhausted for band width " + std::to_string(width) +
                             " after " + std::to_string(bands.attempts_per_sample) + " attempts (" +
                             std::to_string(leaves.size()) + " leaf cells)");
      }
      const auto frame = cell_frame<double>({leaves[pick(rng)], m});
      const Eigen::Vector3d cand = frame.center + frame.half_extent * Eigen::Vector3d(u(rng), u(rng), u(rng));
      x = cand.cast<float>().cast<double>();
      s = shape.sdf(x);
      if (std::abs(s) <= width) break;
    }
    const auto r = static_cast<Eigen::Index>(i);
    out.coords.row(r) = x.cast<float>().transpose();
    if (kind == FieldKind::Nerf) {
      Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
      d.normalize();
      out.view_dirs.row(r) = d.cast<float>().transpose();
      out.geometry[r] = static_cast<float>(nerf->density(x));
      out.colors.row(r) = nerf->color(x, d).cast<float>().transpose();
    } else {
      out.geometry[r] = static_cast<float>(s);
      if (kind == FieldKind::SdfRgb) {
        const Eigen::Vector3d p = x - s * shape.gradient(x);
        out.colors.row(r) = shape.color(p).cast<float>().transpose();
      }
    }
  }
  return out;
}

FieldSampleSet generate_object(const ObjectSpec& spec, const GenerationOptions& options) {
  if (options.max_lod < 1) throw DomainError("generate_object: max_lod must be >= 1");
  SparseOctree tree = build_gt_octree(spec.shape, options.max_lod);
  if (tree.empty()) throw DomainError("generate_object: shape '" + spec.id + "' does not intersect the unit cube");
  std::optional<NerfToyField> nerf;
  if (options.kind == FieldKind::Nerf) nerf = make_nerf_toy(spec.shape);
  FieldSampleSet set = sample_bands(spec.shape, tree, options.samples, options.kind, options.seed, options.bands, nerf);
  set.id = spec.id;
  if (options.surface_samples > 0) {
    set.surface = sample_surface(spec.shape, options.surface_samples, options.seed ^ 0x5bd1e995ULL);
    if (nerf) {
      for (Eigen::Index i = 0; i < set.surface.points.rows(); ++i) {
        const Eigen::Vector3d p = set.surface.points.row(i).transpose();
        set.surface.colors.row(i) = nerf->color(p, -set.surface.normals.row(i).transpose()).transpose();
      }
    }
  }
  return set;
}

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

int record_width(FieldKind kind) {
  switch (kind) {
    case FieldKind::Sdf: return 4;
    case FieldKind::SdfRgb: return 7;
    case FieldKind::Nerf: return 10;
  }
  return 0;
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const std::vector<FieldSampleSet>& objects) {
  ByteWriter out;
  out.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("RFND"), 4));
  out.put<std::uint32_t>(kDatasetVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(objects.size()));
  for (const auto& o : objects) {
    out.put_string(o.id);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(o.kind));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(o.max_lod()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(o.size()));
    const auto tree = o.octree.serialize();
    out.put<std::uint32_t>(static_cast<std::uint32_t>(tree.size()));
    out.put_bytes(tree);
    std::vector<float> rec(static_cast<std::size_t>(record_width(o.kind)));
    for (Eigen::Index i = 0; i < o.size(); ++i) {
      rec[0] = o.coords(i, 0);
      rec[1] = o.coords(i, 1);
      rec[2] = o.coords(i, 2);
      rec[3] = o.geometry[i];
      if (has_color(o.kind)) {
        for (int c = 0; c < 3; ++c) rec[4 + c] = o.colors(i, c);
      }
      if (o.kind == FieldKind::Nerf) {
        for (int c = 0; c < 3; ++c) rec[7 + c] = o.view_dirs(i, c);
      }
      out.put_array<float>(rec);
    }
    out.put<std::uint32_t>(static_cast<std::uint32_t>(o.surface.points.rows()));
    for (Eigen::Index i = 0; i < o.surface.points.rows(); ++i) {
      float s[9];
      for (int c = 0; c < 3; ++c) {
        s[c] = static_cast<float>(o.surface.points(i, c));
        s[3 + c] = static_cast<float>(o.surface.normals(i, c));
        s[6 + c] = static_cast<float>(o.surface.colors(i, c));
      }
      out.put_array<float>(s);
    }
  }
  return std::move(out).bytes();
}

std::vector<FieldSampleSet> decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.get_bytes(4);
  if (std::string(reinterpret_cast<const char*>(magic.data()), 4) != "RFND") throw IoError("dataset: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) throw IoError("dataset: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<FieldSampleSet> objects;
  for (std::uint32_t k = 0; k < count; ++k) {
    FieldSampleSet o;
    o.id = in.get_string();
    const auto kind = in.get<std::uint8_t>();
    if (kind > 2) throw IoError("dataset: unknown field kind");
    o.kind = static_cast<FieldKind>(kind);
    const auto max_lod = in.get<std::uint32_t>();
    const auto n = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    const auto tree_bytes = in.get<std::uint32_t>();
    o.octree = SparseOctree::deserialize(in.get_bytes(tree_bytes));
    if (static_cast<std::uint32_t>(o.octree.max_lod()) != max_lod) throw IoError("dataset: octree depth mismatch");
    o.coords.resize(n, 3);
    o.geometry.resize(n);
    if (has_color(o.kind)) o.colors.resize(n, 3);
    if (o.kind == FieldKind::Nerf) o.view_dirs.resize(n, 3);
    std::vector<float> rec(static_cast<std::size_t>(record_width(o.kind)));
    for (Eigen::Index i = 0; i < n; ++i) {
      in.get_array<float>(rec);
      o.coords.row(i) << rec[0], rec[1], rec[2];
      o.geometry[i] = rec[3];
      if (has_color(o.kind)) o.colors.row(i) << rec[4], rec[5], rec[6];
      if (o.kind == FieldKind::Nerf) o.view_dirs.row(i) << rec[7], rec[8], rec[9];
    }
    const auto s = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    o.surface.points.resize(s, 3);
    o.surface.normals.resize(s, 3);
    o.surface.colors.resize(s, 3);
    for (Eigen::Index i = 0; i < s; ++i) {
      float v[9];
      in.get_array<float>(v);
      for (int c = 0; c < 3; ++c) {
        o.surface.points(i, c) = v[c];
        o.surface.normals(i, c) = v[3 + c];
        o.surface.colors(i, c) = v[6 + c];
      }
    }
    objects.push_back(std::move(o));
  }
  if (!in.at_end()) throw IoError("dataset: trailing bytes");
  return objects;
}

void save_dataset(const std::string& path, const std::vector<FieldSampleSet>& objects) {
  write_file_bytes(path, encode_dataset(objects));
}

std::vector<FieldSampleSet> load_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

}  // namespace refine

#include "refine/rendering.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "refine/errors.hpp"
#include "refine/parallel.hpp"

namespace refine {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t pixel_seed(std::uint64_t seed, std::uint64_t pixel) { return splitmix64(seed ^ splitmix64(pixel)); }

// Slab interval without clipping; `pad` widens the box for conservative culling.
bool slab(const Ray& ray, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double pad, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    const double l = lo[a] - pad;
    const double h = hi[a] + pad;
    if (d == 0.0) {
      if (o < l || o > h) return false;
      continue;
    }
    double ta = (l - o) / d;
    double tb = (h - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return true;
}

}  // namespace

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw DomainError("camera: image size must be positive");
  if (!intrinsics.allFinite() || std::abs(intrinsics.determinant()) < 1e-12) {
    throw DomainError("camera: intrinsics are singular");
  }
  const Eigen::Matrix3d r = world_from_camera.topLeftCorner<3, 3>();
  if (!world_from_camera.allFinite() || (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() >= 1e-4) {
    throw DomainError("camera: rotation is not orthonormal");
  }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double vertical_fov_deg, int width, int height) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) throw DomainError("camera: up vector is parallel to the view direction");
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Camera cam;
  cam.width = width;
  cam.height = height;
  const double f = 0.5 * height / std::tan(0.5 * vertical_fov_deg * M_PI / 180.0);
  cam.intrinsics << f, 0, 0.5 * width, 0, f, 0.5 * height, 0, 0, 1;
  cam.world_from_camera.setIdentity();
  cam.world_from_camera.block<3, 1>(0, 0) = x;
  cam.world_from_camera.block<3, 1>(0, 1) = y;
  cam.world_from_camera.block<3, 1>(0, 2) = z;
  cam.world_from_camera.block<3, 1>(0, 3) = eye;
  cam.validate();
  return cam;
}

Ray pixel_ray(const Camera& camera, int px, int py) {
  const Eigen::Vector3d pix(px + 0.5, py + 0.5, 1.0);
  const Eigen::Vector3d d_cam = camera.intrinsics.inverse() * pix;
  Ray ray;
  ray.origin = camera.world_from_camera.block<3, 1>(0, 3);
  ray.direction = (camera.world_from_camera.topLeftCorner<3, 3>() * d_cam).normalized();
  return ray;
}

std::optional<std::pair<double, double>> ray_box(const Ray& ray, const Eigen::Vector3d& lo,
                                                 const Eigen::Vector3d& hi) {
  double t0, t1;
  if (!slab(ray, lo, hi, 0.0, t0, t1)) return std::nullopt;
  t0 = std::max(t0, 0.0);
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::vector<RayInterval> ray_voxel_intersections(const SparseOctree& tree, const Ray& ray) {
  std::vector<RayInterval> out;
  if (tree.empty()) return out;
  const int m = tree.max_lod();
  constexpr double kPad = 1e-9;
  std::vector<std::uint64_t> frontier{0};
  std::vector<std::uint64_t> next;
  for (int lod = 0; lod < m; ++lod) {
    next.clear();
    for (auto code : frontier) {
      for (std::uint64_t i = 0; i < 8; ++i) {
        const MortonKey child{(code << 3) | i, lod + 1};
        if (!tree.contains(child)) continue;
        const auto f = cell_frame<double>(child);
        const Eigen::Vector3d h = Eigen::Vector3d::Constant(f.half_extent);
        double t0, t1;
        if (lod + 1 < m) {
          if (slab(ray, f.center - h, f.center + h, kPad, t0, t1) && t1 >= std::max(t0, 0.0)) next.push_back(child.code);
        } else if (auto hit = ray_box(ray, f.center - h, f.center + h)) {
          out.push_back({hit->first, hit->second, child.code});
        }
      }
    }
    frontier.swap(next);
  }
  if (m == 0) {
    if (auto hit = ray_box(ray, Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1))) {
      out.push_back({hit->first, hit->second, 0});
    }
  }
  std::sort(out.begin(), out.end(), [](const RayInterval& a, const RayInterval& b) {
    return a.enter != b.enter ? a.enter < b.enter : a.code < b.code;
  });
  return out;
}

std::vector<Span> voxel_spans(const std::vector<RayInterval>& intervals) {
  std::vector<Span> spans;
  spans.reserve(intervals.size());
  for (const auto& iv : intervals) {
    if (iv.exit > iv.enter) spans.push_back({iv.enter, iv.exit});
  }
  return spans;
}

std::vector<Span> merge_intervals(const std::vector<RayInterval>& intervals, double gap) {
  std::vector<Span> spans;
  for (const auto& iv : intervals) {
    if (!spans.empty() && iv.enter <= spans.back().exit + gap) {
      spans.back().exit = std::max(spans.back().exit, iv.exit);
    } else {
      spans.push_back({iv.enter, iv.exit});
    }
  }
  return spans;
}

std::vector<TraceResult> sphere_trace(const SdfFn& sdf, const std::vector<std::vector<Span>>& spans,
                                      const std::vector<Ray>& rays, const SphereTraceOptions& options) {
  if (spans.size() != rays.size()) throw DomainError("sphere_trace: one span list per ray required");
  const std::size_t n = rays.size();
  std::vector<TraceResult> out(n);
  std::vector<std::size_t> span_index(n, 0);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (!spans[i].empty()) {
      out[i].t = spans[i][0].enter;
      active.push_back(i);
    }
  }
  MatrixXf pts;
  while (!active.empty()) {
    pts.resize(static_cast<Eigen::Index>(active.size()), 3);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& r = rays[active[a]];
      pts.row(static_cast<Eigen::Index>(a)) = (r.origin + out[active[a]].t * r.direction).cast<float>().transpose();
    }
    const Eigen::VectorXf s = sdf(pts);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      auto& res = out[i];
      ++res.steps;
      const double d = s[static_cast<Eigen::Index>(a)];
      if (d < options.hit_eps) {
        res.hit = true;
        continue;
      }
      res.t += d;
      while (span_index[i] < spans[i].size() && res.t >= spans[i][span_index[i]].exit) {
        if (++span_index[i] < spans[i].size()) res.t = std::max(res.t, spans[i][span_index[i]].enter);
      }
      if (span_index[i] >= spans[i].size() || res.steps >= options.max_steps) continue;
      still.push_back(i);
    }
    active.swap(still);
  }
  return out;
}

Composite composite(const Eigen::VectorXd& t, const Eigen::VectorXd& delta, const Eigen::VectorXd& sigma,
                    const Eigen::MatrixX3d& rgb) {
  const Eigen::Index k = t.size();
  if (delta.size() != k || sigma.size() != k || rgb.rows() != k) throw DomainError("composite: size mismatch");
  Composite c;
  c.weights.resize(k);
  c.transmittance.resize(k);
  double optical = 0;
  double depth = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double tau = std::max(0.0, sigma[i]) * delta[i];
    const double ti = std::exp(-optical);
    const double w = ti * -std::expm1(-tau);
    c.transmittance[i] = ti;
    c.weights[i] = w;
    c.rgb += w * rgb.row(i).transpose();
    c.opacity += w;
    depth += w * t[i];
    optical += tau;
  }
  c.opacity = std::min(c.opacity, 1.0);
  c.depth = c.opacity > 0 ? depth / c.weights.sum() : 0.0;
  return c;
}

void stratified_samples(const std::vector<Span>& spans, int budget, std::uint64_t seed, std::vector<double>& t,
                        std::vector<double>& delta) {
  t.clear();
  delta.clear();
  if (spans.empty() || budget <= 0) return;
  double total = 0;
  for (const auto& s : spans) total += s.exit - s.enter;
  if (!(total > 0)) return;
  // One guaranteed sample per span when the budget covers them all.
  const int base = budget >= static_cast<int>(spans.size()) ? 1 : 0;
  const int spread = budget - base * static_cast<int>(spans.size());
  std::vector<int> count(spans.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  int assigned = 0;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const double share = spread * (spans[i].exit - spans[i].enter) / total;
    count[i] = base + static_cast<int>(std::floor(share));
    assigned += count[i];
    remainder.emplace_back(share - std::floor(share), i);
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < budget && r < remainder.size(); ++r, ++assigned) ++count[remainder[r].second];
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (count[i] == 0) continue;
    const double width = (spans[i].exit - spans[i].enter) / count[i];
    for (int j = 0; j < count[i]; ++j) {
      t.push_back(spans[i].enter + (j + u(rng)) * width);
      delta.push_back(width);
    }
  }
}

std::vector<Composite> volume_render(const RadianceFn& field, const std::vector<std::vector<Span>>& spans,
                                     const std::vector<Ray>& rays, const std::vector<std::uint64_t>& seeds,
                                     const VolumeOptions& options) {
  if (spans.size() != rays.size() || seeds.size() != rays.size()) {
    throw DomainError("volume_render: spans, rays and seeds must align");
  }
  const std::size_t n = rays.size();
  std::vector<std::vector<double>> ts(n), deltas(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    stratified_samples(spans[i], options.samples_per_ray, seeds[i], ts[i], deltas[i]);
    total += ts[i].size();
  }
  MatrixXf pts(static_cast<Eigen::Index>(total), 3);
  MatrixXf dirs(static_cast<Eigen::Index>(total), 3);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3f d = rays[i].direction.cast<float>();
    for (double t : ts[i]) {
      pts.row(row) = (rays[i].origin + t * rays[i].direction).cast<float>().transpose();
      dirs.row(row) = d.transpose();
      ++row;
    }
  }
  Eigen::VectorXf sigma;
  MatrixXf rgb;
  if (total > 0) field(pts, dirs, sigma, rgb);
  std::vector<Composite> out(n);
  row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(ts[i].size());
    if (k == 0) {
      out[i].weights.resize(0);
      out[i].transmittance.resize(0);
      continue;
    }
    const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(ts[i].data(), k);
    const Eigen::VectorXd dl = Eigen::Map<const Eigen::VectorXd>(deltas[i].data(), k);
    out[i] = composite(t, dl, sigma.segment(row, k).cast<double>(), rgb.middleRows(row, k).cast<double>());
    row += k;
  }
  return out;
}

RendererKind parse_renderer(const std::string& s) {
  if (s == "sphere") return RendererKind::Sphere;
  if (s == "volume") return RendererKind::Volume;
  throw DomainError("unknown renderer '" + s + "' (expected sphere or volume)");
}

namespace {

Image blank_image(const Camera& camera) {
  camera.validate();
  Image img;
  img.width = camera.width;
  img.height = camera.height;
  const Eigen::Index n = static_cast<Eigen::Index>(camera.width) * camera.height;
  img.rgb = MatrixXf::Zero(n, 3);
  img.mask.assign(static_cast<std::size_t>(n), 0);
  img.depth = Eigen::VectorXf::Zero(n);
  img.ray_count = static_cast<std::size_t>(n);
  return img;
}

void block_rays(const Camera& camera, const SparseOctree& occupancy, std::size_t begin, std::size_t end, bool merge,
                std::vector<Ray>& rays, std::vector<std::vector<Span>>& spans) {
  rays.clear();
  spans.clear();
  for (std::size_t p = begin; p < end; ++p) {
    const int px = static_cast<int>(p % static_cast<std::size_t>(camera.width));
    const int py = static_cast<int>(p / static_cast<std::size_t>(camera.width));
    rays.push_back(pixel_ray(camera, px, py));
    const auto intervals = ray_voxel_intersections(occupancy, rays.back());
    spans.push_back(merge ? merge_intervals(intervals) : voxel_spans(intervals));
  }
}

}  // namespace

Image render_sphere(const Camera& camera, const SparseOctree& occupancy, const SdfFn& sdf,
                    const std::function<MatrixXf(const MatrixXf&)>& shade, const RenderOptions& options) {
  Image img = blank_image(camera);
  parallel_blocks(img.ray_count, options.threads, options.batch, [&](std::size_t begin, std::size_t end) {
    std::vector<Ray> rays;
    std::vector<std::vector<Span>> spans;
    block_rays(camera, occupancy, begin, end, true, rays, spans);
    const auto hits = sphere_trace(sdf, spans, rays, options.trace);
    std::vector<std::size_t> hit_rows;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].hit) hit_rows.push_back(i);
    }
    MatrixXf pts(static_cast<Eigen::Index>(hit_rows.size()), 3);
    for (std::size_t h = 0; h < hit_rows.size(); ++h) {
      const auto i = hit_rows[h];
      pts.row(static_cast<Eigen::Index>(h)) = (rays[i].origin + hits[i].t * rays[i].direction).cast<float>().transpose();
    }
    MatrixXf colors;
    if (shade && pts.rows() > 0) colors = shade(pts);
    for (std::size_t h = 0; h < hit_rows.size(); ++h) {
      const auto i = hit_rows[h];
      const auto p = static_cast<Eigen::Index>(begin + i);
      img.mask[static_cast<std::size_t>(p)] = 1;
      img.depth[p] = static_cast<float>(hits[i].t);
      if (shade) {
        img.rgb.row(p) = colors.row(static_cast<Eigen::Index>(h));
      } else {
        img.rgb.row(p).setOnes();
      }
    }
  });
  return img;
}

Image render_volume(const Camera& camera, const SparseOctree& occupancy, const RadianceFn& field,
                    const RenderOptions& options) {
  Image img = blank_image(camera);
  parallel_blocks(img.ray_count, options.threads, options.batch, [&](std::size_t begin, std::size_t end) {
    std::vector<Ray> rays;
    std::vector<std::vector<Span>> spans;
    block_rays(camera, occupancy, begin, end, false, rays, spans);
    std::vector<std::uint64_t> seeds;
    for (std::size_t p = begin; p < end; ++p) seeds.push_back(pixel_seed(options.volume.seed, p));
    const auto comps = volume_render(field, spans, rays, seeds, options.volume);
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const auto p = static_cast<Eigen::Index>(begin + i);
      img.rgb.row(p) = comps[i].rgb.cast<float>().transpose();
      img.depth[p] = static_cast<float>(comps[i].depth);
      img.mask[static_cast<std::size_t>(p)] = comps[i].opacity > 0.5 ? 1 : 0;
    }
  });
  return img;
}

SdfFn model_sdf(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree) {
  if (config.field == FieldKind::Nerf) throw DomainError("sphere tracing needs an sdf model");
  return [&nets, &config, &tree](const MatrixXf& pts) -> Eigen::VectorXf {
    return decode(nets, config, tree, pts).geometry;
  };
}

RadianceFn model_radiance(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree) {
  if (config.field != FieldKind::Nerf) throw DomainError("volume rendering needs a nerf model");
  return [&nets, &config, &tree](const MatrixXf& pts, const MatrixXf& dirs, Eigen::VectorXf& sigma, MatrixXf& rgb) {
    auto s = decode(nets, config, tree, pts, &dirs);
    for (Eigen::Index i = 0; i < s.geometry.size(); ++i) {
      if (s.out_of_field[static_cast<std::size_t>(i)]) s.geometry[i] = 0;
    }
    sigma = std::move(s.geometry);
    rgb = std::move(s.colors);
  };
}

Image render_image(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                   const Camera& camera, RendererKind kind, const RenderOptions& options) {
  const SparseOctree occupancy = tree.structure();
  if (kind == RendererKind::Volume) return render_volume(camera, occupancy, model_radiance(nets, config, tree), options);
  const Eigen::Vector3f eye = camera.world_from_camera.block<3, 1>(0, 3).cast<float>();
  auto shade = [&](const MatrixXf& pts) -> MatrixXf {
    if (config.field == FieldKind::SdfRgb) return decode(nets, config, tree, pts).colors;
    const auto normals = sdf_normals(nets, config, tree, pts);
    MatrixXf rgb(pts.rows(), 3);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Eigen::Vector3f to_eye = (eye - pts.row(i).transpose()).normalized();
      const float lambert = std::abs(normals.normals.row(i).dot(to_eye.transpose()));
      rgb.row(i).setConstant(0.15f + 0.85f * lambert);
    }
    return rgb;
  };
  return render_sphere(camera, occupancy, model_sdf(nets, config, tree), shade, options);
}

OrientedPoints isosurface_extract(const RefineNetworks& nets, const ModelConfig& config, const LatentOctree& tree,
                                  const IsoSurfaceOptions& options) {
  if (config.field == FieldKind::Nerf) throw DomainError("isosurface_extract: needs an sdf model");
  if (options.samples_per_voxel < 0 || options.iterations < 0) throw DomainError("isosurface_extract: bad options");
  const int m = tree.max_lod();
  const double tau = options.tau > 0 ? options.tau : 1.0 / std::ldexp(1.0, m + 2);
  const auto& leaves = tree.levels.back().codes;
  const auto per = static_cast<Eigen::Index>(1 + options.samples_per_voxel);
  MatrixXf x(static_cast<Eigen::Index>(leaves.size()) * per, 3);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Index row = 0;
  for (auto code : leaves) {
    const auto f = cell_frame<double>({code, m});
    x.row(row++) = f.center.cast<float>().transpose();
    for (int s = 0; s < options.samples_per_voxel; ++s) {
      const Eigen::Vector3d p = f.center + f.half_extent * Eigen::Vector3d(u(rng), u(rng), u(rng));
      x.row(row++) = p.cast<float>().transpose();
    }
  }
  OrientedPoints out;
  out.candidates = static_cast<std::size_t>(x.rows());
  std::vector<std::uint8_t> dropped(static_cast<std::size_t>(x.rows()), 0);
  NormalSamples ns = sdf_normals(nets, config, tree, x);
  for (int it = 0; it < options.iterations; ++it) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (ns.degenerate[static_cast<std::size_t>(i)]) {
        dropped[static_cast<std::size_t>(i)] = 1;
        continue;
      }
      x.row(i) -= ns.sdf[i] * ns.normals.row(i);
    }
    x = x.cwiseMax(-1.0f).cwiseMin(1.0f);
    ns = sdf_normals(nets, config, tree, x);
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto q = static_cast<std::size_t>(i);
    if (ns.degenerate[q]) dropped[q] = 1;
    if (dropped[q]) {
      ++out.degenerate;
      continue;
    }
    if (ns.out_of_field[q] || !(std::abs(ns.sdf[i]) < tau)) continue;
    keep.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  out.points.resize(k, 3);
  out.normals.resize(k, 3);
  out.residual.resize(k);
  MatrixXf kept(k, 3);
  for (Eigen::Index j = 0; j < k; ++j) {
    kept.row(j) = x.row(keep[static_cast<std::size_t>(j)]);
    out.points.row(j) = kept.row(j).cast<double>();
    out.normals.row(j) = ns.normals.row(keep[static_cast<std::size_t>(j)]).cast<double>();
    out.residual[j] = std::abs(static_cast<double>(ns.sdf[keep[static_cast<std::size_t>(j)]]));
  }
  if (config.field == FieldKind::SdfRgb && k > 0) out.colors = decode(nets, config, tree, kept).colors.cast<double>();
  return out;
}

}  // namespace refine

#include "refine/config.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <set>

#include "refine/binary_io.hpp"
#include "refine/errors.hpp"

namespace refine {
namespace {

using nlohmann::json;

// Reads members of one JSON object and rejects the ones never asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw DomainError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw DomainError(where_ + ": unknown key '" + key + "'");
    }
  }
  Fields(const Fields&) = delete;
  Fields& operator=(const Fields&) = delete;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw DomainError(where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }
  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw DomainError(where_ + "." + key + ": wrong type");
    }
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DomainError(what + ": invalid JSON: " + e.what());
  }
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

Eigen::Vector3d vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw DomainError(where + ": expected [x, y, z]");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw DomainError(where + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

template <typename T>
T enum_field(Fields& f, const std::string& key, T value, T (*parse)(const std::string&)) {
  std::string s;
  f.get(key, s);
  return s.empty() ? value : parse(s);
}

void read_model(const json& j, ModelConfig& m) {
  Fields f(j, "model");
  m.field = enum_field(f, "field", m.field, parse_field_kind);
  f.get("latent_dim", m.latent_dim);
  f.get("max_lod", m.max_lod);
  m.fusion = enum_field(f, "fusion", m.fusion, parse_fusion_kind);
  f.get("subdivision_hidden", m.subdivision_hidden);
  f.get("head_hidden", m.head_hidden);
  m.activation = enum_field(f, "activation", m.activation, parse_activation);
  f.get("omega0", m.omega0);
}

void read_train(const json& j, TrainConfig& t, FieldKind kind) {
  Fields f(j, "train");
  const TrainConfig d = TrainConfig::defaults_for(kind);
  t.w_occupancy = d.w_occupancy;
  t.w_geometry = d.w_geometry;
  t.w_color = d.w_color;
  f.get("w_occupancy", t.w_occupancy);
  f.get("w_geometry", t.w_geometry);
  f.get("w_color", t.w_color);
  f.get("lr_net", t.lr_net);
  f.get("lr_latent", t.lr_latent);
  f.get("objects_per_step", t.objects_per_step);
  f.get("samples_per_object", t.samples_per_object);
  f.get("steps", t.steps);
  f.get("seed", t.seed);
  f.get("checkpoint_interval", t.checkpoint_interval);
  f.get("log_interval", t.log_interval);
  f.get("divergence_window", t.divergence_window);
}

void read_data(const json& j, GenerationOptions& g) {
  Fields f(j, "data");
  f.get("max_lod", g.max_lod);
  f.get("samples", g.samples);
  f.get("surface_samples", g.surface_samples);
  g.kind = enum_field(f, "kind", g.kind, parse_field_kind);
  f.get("seed", g.seed);
  if (f.has("bands")) {
    Fields b(f.at("bands"), "data.bands");
    b.get("wide_width", g.bands.wide_width);
    b.get("tight_width", g.bands.tight_width);
    b.get("tight_fraction", g.bands.tight_fraction);
    b.get("volume_fraction", g.bands.volume_fraction);
    b.get("attempts_per_sample", g.bands.attempts_per_sample);
  }
}

void read_render(const json& j, RenderSettings& r) {
  Fields f(j, "render");
  f.get("width", r.width);
  f.get("height", r.height);
  f.get("samples_per_ray", r.options.volume.samples_per_ray);
  f.get("max_steps", r.options.trace.max_steps);
  f.get("hit_eps", r.options.trace.hit_eps);
  f.get("batch", r.options.batch);
}

void read_iso(const json& j, IsoSurfaceOptions& o) {
  Fields f(j, "iso");
  f.get("samples_per_voxel", o.samples_per_voxel);
  f.get("iterations", o.iterations);
  f.get("tau", o.tau);
  f.get("seed", o.seed);
}

AnalyticShape::ColorFn read_color(const json& j, const std::string& where) {
  if (j.is_array()) {
    const Eigen::Vector3d c = vec3(j, where);
    return [c](const Eigen::Vector3d&) { return c; };
  }
  Fields f(j, where);
  std::string type;
  f.get("type", type);
  if (type == "position") {
    return [](const Eigen::Vector3d& x) -> Eigen::Vector3d { return (0.5 * x.array() + 0.5).matrix(); };
  }
  if (type == "gradient") {
    int axis = 1;
    f.get("axis", axis);
    if (axis < 0 || axis > 2) throw DomainError(where + ".axis: must be 0, 1 or 2");
    const Eigen::Vector3d from = vec3(f.at("from"), where + ".from");
    const Eigen::Vector3d to = vec3(f.at("to"), where + ".to");
    return [axis, from, to](const Eigen::Vector3d& x) -> Eigen::Vector3d {
      const double t = std::clamp(0.5 * (x[axis] + 1.0), 0.0, 1.0);
      return (1 - t) * from + t * to;
    };
  }
  throw DomainError(where + ": unknown color type '" + type + "'");
}

AnalyticShape read_shape(const json& j, const std::string& where) {
  Fields f(j, where);
  std::string type;
  f.get("type", type);
  auto number = [&](const std::string& key) {
    const json& v = f.at(key);
    if (!v.is_number()) throw DomainError(where + "." + key + ": expected a number");
    return v.get<double>();
  };
  auto children = [&]() {
    const json& c = f.at("children");
    if (!c.is_array() || c.size() < 2) throw DomainError(where + ".children: expected at least two shapes");
    std::vector<AnalyticShape> out;
    for (std::size_t i = 0; i < c.size(); ++i) out.push_back(read_shape(c[i], where + ".children[" + std::to_string(i) + "]"));
    return out;
  };
  AnalyticShape s;
  if (type == "sphere") {
    const double r = number("radius");
    if (!(r > 0)) throw DomainError(where + ".radius: must be positive");
    s = AnalyticShape::sphere(r);
  } else if (type == "box") {
    const Eigen::Vector3d h = vec3(f.at("half_extents"), where + ".half_extents");
    if (!(h.minCoeff() > 0)) throw DomainError(where + ".half_extents: must be positive");
    s = AnalyticShape::box(h);
  } else if (type == "torus") {
    const double major = number("major");
    const double minor = number("minor");
    if (!(minor > 0) || !(major > minor)) throw DomainError(where + ": torus needs major > minor > 0");
    s = AnalyticShape::torus(major, minor);
  } else if (type == "union" || type == "intersection") {
    auto parts = children();
    s = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
      s = type == "union" ? AnalyticShape::unite(s, parts[i]) : AnalyticShape::intersect(s, parts[i]);
    }
  } else if (type == "smooth_union") {
    const double k = number("k");
    if (!(k > 0)) throw DomainError(where + ".k: must be positive");
    auto parts = children();
    s = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) s = AnalyticShape::smooth_unite(s, parts[i], k);
  } else {
    throw DomainError(where + ": unknown shape type '" + type + "'");
  }
  if (f.has("scale")) {
    const double k = number("scale");
    if (!(k > 0)) throw DomainError(where + ".scale: must be positive");
    s = s.scaled(k);
  }
  if (f.has("rotate")) {
    const json& r = f.at("rotate");
    if (!r.is_array() || r.size() != 4) throw DomainError(where + ".rotate: expected [ax, ay, az, degrees]");
    const Eigen::Vector3d axis(r[0].get<double>(), r[1].get<double>(), r[2].get<double>());
    if (axis.norm() == 0) throw DomainError(where + ".rotate: zero axis");
    const double rad = r[3].get<double>() * M_PI / 180.0;
    s = s.rotated(Eigen::AngleAxisd(rad, axis.normalized()).toRotationMatrix());
  }
  if (f.has("translate")) s = s.translated(vec3(f.at("translate"), where + ".translate"));
  return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_text(json_text, "run config");
  RunConfig c;
  Fields f(j, "config");
  if (f.has("model")) read_model(f.at("model"), c.model);
  c.train = TrainConfig::defaults_for(c.model.field);
  if (f.has("train")) read_train(f.at("train"), c.train, c.model.field);
  c.data.max_lod = c.model.max_lod;
  c.data.kind = c.model.field;
  if (f.has("data")) read_data(f.at("data"), c.data);
  if (f.has("render")) read_render(f.at("render"), c.render);
  if (f.has("iso")) read_iso(f.at("iso"), c.iso);
  c.model.validate();
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text(path)); }

std::string dump_run_config(const RunConfig& c) {
  json j;
  j["model"] = {{"field", to_string(c.model.field)},
                {"latent_dim", c.model.latent_dim},
                {"max_lod", c.model.max_lod},
                {"fusion", to_string(c.model.fusion)},
                {"subdivision_hidden", c.model.subdivision_hidden},
                {"head_hidden", c.model.head_hidden},
                {"activation", to_string(c.model.activation)},
                {"omega0", c.model.omega0}};
  j["train"] = {{"w_occupancy", c.train.w_occupancy},
                {"w_geometry", c.train.w_geometry},
                {"w_color", c.train.w_color},
                {"lr_net", c.train.lr_net},
                {"lr_latent", c.train.lr_latent},
                {"objects_per_step", c.train.objects_per_step},
                {"samples_per_object", c.train.samples_per_object},
                {"steps", c.train.steps},
                {"seed", c.train.seed},
                {"checkpoint_interval", c.train.checkpoint_interval},
                {"log_interval", c.train.log_interval},
                {"divergence_window", c.train.divergence_window}};
  j["data"] = {{"max_lod", c.data.max_lod},
               {"samples", c.data.samples},
               {"surface_samples", c.data.surface_samples},
               {"kind", to_string(c.data.kind)},
               {"seed", c.data.seed},
               {"bands",
                {{"wide_width", c.data.bands.wide_width},
                 {"tight_width", c.data.bands.tight_width},
                 {"tight_fraction", c.data.bands.tight_fraction},
                 {"volume_fraction", c.data.bands.volume_fraction},
                 {"attempts_per_sample", c.data.bands.attempts_per_sample}}}};
  j["render"] = {{"width", c.render.width},
                 {"height", c.render.height},
                 {"samples_per_ray", c.render.options.volume.samples_per_ray},
                 {"max_steps", c.render.options.trace.max_steps},
                 {"hit_eps", c.render.options.trace.hit_eps},
                 {"batch", c.render.options.batch}};
  j["iso"] = {{"samples_per_voxel", c.iso.samples_per_voxel},
              {"iterations", c.iso.iterations},
              {"tau", c.iso.tau},
              {"seed", c.iso.seed}};
  return j.dump(2);
}

std::vector<ObjectSpec> parse_shape_specs(const std::string& json_text) {
  const json j = parse_text(json_text, "shape list");
  Fields top(j, "shapes");
  const json& objects = top.at("objects");
  if (!objects.is_array() || objects.empty()) throw DomainError("shapes.objects: expected a nonempty array");
  std::vector<ObjectSpec> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string where = "objects[" + std::to_string(i) + "]";
    Fields f(objects[i], where);
    ObjectSpec spec;
    f.get("id", spec.id);
    if (spec.id.empty()) throw DomainError(where + ": missing id");
    if (!ids.insert(spec.id).second) throw DomainError(where + ": duplicate id '" + spec.id + "'");
    spec.shape = read_shape(f.at("shape"), where + ".shape");
    if (f.has("color")) spec.shape = spec.shape.with_color(read_color(f.at("color"), where + ".color"));
    bool normalize = false;
    f.get("normalize", normalize);
    if (normalize) spec.shape = normalize_to_unit(spec.shape);
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<ObjectSpec> load_shape_specs(const std::string& path) { return parse_shape_specs(read_text(path)); }

Camera parse_camera(const std::string& json_text) {
  const json j = parse_text(json_text, "camera");
  Fields f(j, "camera");
  int width = 0, height = 0;
  f.get("width", width);
  f.get("height", height);
  Camera cam;
  if (f.has("intrinsics")) {
    auto matrix = [&](const json& m, int n, const std::string& where) {
      Eigen::MatrixXd out(n, n);
      if (!m.is_array() || static_cast<int>(m.size()) != n) throw DomainError(where + ": wrong row count");
      for (int r = 0; r < n; ++r) {
        if (!m[r].is_array() || static_cast<int>(m[r].size()) != n) throw DomainError(where + ": wrong column count");
        for (int c = 0; c < n; ++c) out(r, c) = m[r][c].get<double>();
      }
      return out;
    };
    cam.intrinsics = matrix(f.at("intrinsics"), 3, "camera.intrinsics");
    cam.world_from_camera = matrix(f.at("world_from_camera"), 4, "camera.world_from_camera");
    cam.width = width;
    cam.height = height;
    cam.validate();
  } else {
    double fov = 40.0;
    f.get("fov_deg", fov);
    Eigen::Vector3d up(0, 1, 0);
    if (f.has("up")) up = vec3(f.at("up"), "camera.up");
    if (!(fov > 0 && fov < 180)) throw DomainError("camera.fov_deg: must lie in (0, 180)");
    if (width <= 0 || height <= 0) throw DomainError("camera: width and height must be positive");
    cam = Camera::look_at(vec3(f.at("eye"), "camera.eye"), vec3(f.at("target"), "camera.target"), up, fov, width,
                          height);
  }
  return cam;
}

Camera load_camera(const std::string& path) { return parse_camera(read_text(path)); }

}  // namespace refine

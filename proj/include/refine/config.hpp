#pragma once

// JSON inputs: run configuration, shape lists and cameras. Every object
// rejects keys it does not know.
//
// Run configuration (all sections and keys optional, defaults shown by
// `refine config-defaults`):
//   { "model":  { "field", "latent_dim", "max_lod", "fusion", "subdivision_hidden",
//                 "head_hidden", "activation", "omega0" },
//     "train":  { "w_occupancy", "w_geometry", "w_color", "lr_net", "lr_latent",
//                 "objects_per_step", "samples_per_object", "steps", "seed",
//                 "checkpoint_interval", "log_interval", "divergence_window" },
//     "data":   { "max_lod", "samples", "surface_samples", "kind", "seed",
//                 "bands": { "wide_width", "tight_width", "tight_fraction",
//                            "volume_fraction", "attempts_per_sample" } },
//     "render": { "width", "height", "samples_per_ray", "max_steps", "hit_eps", "batch" },
//     "iso":    { "samples_per_voxel", "iterations", "tau", "seed" } }
// When "train" omits the loss weights they follow the model's field kind.
//
// Shape list: { "objects": [ { "id", "shape", "color"?, "normalize"? } ] }
// where a shape is
//   { "type": "sphere", "radius" } | { "type": "box", "half_extents": [x,y,z] }
//   | { "type": "torus", "major", "minor" }
//   | { "type": "union" | "intersection", "children": [a, b, ...] }
//   | { "type": "smooth_union", "k", "children": [a, b, ...] }
// with optional "scale", "rotate": [ax, ay, az, degrees] and "translate": [x,y,z]
// applied in that order. A color is [r,g,b], { "type": "position" } (0.5 + 0.5 x)
// or { "type": "gradient", "axis": 0-2, "from": [r,g,b], "to": [r,g,b] }.
// "normalize": true rescales the object so its bounding sphere has radius 0.9.
//
// Camera: { "width", "height", and either "intrinsics": 3x3 rows plus
// "world_from_camera": 4x4 rows, or "eye", "target", "up", "fov_deg" }.

#include <string>
#include <vector>

#include "refine/data.hpp"
#include "refine/model_config.hpp"
#include "refine/rendering.hpp"
#include "refine/training.hpp"

namespace refine {

struct RenderSettings {
  int width = 64;
  int height = 64;
  RenderOptions options;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenerationOptions data;
  RenderSettings render;
  IsoSurfaceOptions iso{.samples_per_voxel = 4, .iterations = 2, .tau = 0, .seed = 0};
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);

std::vector<ObjectSpec> parse_shape_specs(const std::string& json_text);
std::vector<ObjectSpec> load_shape_specs(const std::string& path);

Camera parse_camera(const std::string& json_text);
Camera load_camera(const std::string& path);

}  // namespace refine

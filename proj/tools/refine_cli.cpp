// refine: command-line front end.
//
//   refine gen-data    --shapes shapes.json --out data.rfnd [--max-lod M --samples N --kind K]
//   refine train       --data data.rfnd --out model.rfne [--config run.json --steps N --resume model.rfne]
//   refine reconstruct --checkpoint model.rfne --id ID --out points.ply
//   refine render      --checkpoint model.rfne --id ID --camera cam.json --renderer sphere|volume --out img.ppm
//   refine eval        --checkpoint model.rfne --data data.rfnd --out metrics.csv
//   refine latent interp --checkpoint model.rfne --a A --b B --steps N --out prefix
//   refine latent pca    --checkpoint model.rfne --out pca.csv
//   refine config-defaults [--config run.json]
//
// Exit codes: 0 success, 1 usage, 2 data or I/O, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "refine/checkpoint.hpp"
#include "refine/config.hpp"
#include "refine/data.hpp"
#include "refine/errors.hpp"
#include "refine/evaluation.hpp"
#include "refine/expansion.hpp"
#include "refine/parallel.hpp"
#include "refine/rendering.hpp"
#include "refine/training.hpp"
#include "refine/writers.hpp"

namespace {

using namespace refine;

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool verbose = false;
  std::string config_path;
};

RunConfig run_config(const Common& common) {
  RunConfig c = common.config_path.empty() ? parse_run_config("{}") : load_run_config(common.config_path);
  if (common.seed) {
    c.train.seed = *common.seed;
    c.data.seed = *common.seed;
    c.iso.seed = *common.seed;
    c.render.options.volume.seed = *common.seed;
  }
  c.render.options.threads = common.threads;
  return c;
}

LatentOctree expand_object(const ModelBundle& bundle, const std::string& id) {
  const auto k = bundle.latents.index_of(id);
  return expand_inference(bundle.nets, bundle.latents.latent(k).value(), bundle.config.max_lod);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

int cmd_gen_data(const Common& common, const std::string& shapes, const std::string& out, std::optional<int> max_lod,
                 std::optional<std::size_t> samples, std::optional<std::string> kind) {
  RunConfig c = run_config(common);
  GenerationOptions g = c.data;
  if (max_lod) g.max_lod = *max_lod;
  if (samples) g.samples = *samples;
  if (kind) g.kind = parse_field_kind(*kind);
  if (g.max_lod < 1) throw DomainError("--max-lod must be >= 1");
  if (g.samples < 1) throw DomainError("--samples must be >= 1");
  const auto specs = load_shape_specs(shapes);
  std::vector<FieldSampleSet> objects;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    GenerationOptions per = g;
    per.seed = g.seed + 7919 * i;
    objects.push_back(generate_object(specs[i], per));
    const auto& tree = objects.back().octree;
    std::cout << specs[i].id << ":";
    for (int lod = 0; lod <= tree.max_lod(); ++lod) std::cout << " " << tree.count(lod);
    std::cout << "\n";
  }
  save_dataset(out, objects);
  return 0;
}

int cmd_train(const Common& common, const std::string& data_path, const std::string& out,
              std::optional<int> steps, const std::string& resume, const std::string& log_path) {
  RunConfig c = run_config(common);
  if (steps) c.train.steps = *steps;
  c.train.checkpoint_path = out;
  const auto data = load_dataset(data_path);
  if (data.empty()) throw DomainError("dataset has no objects");
  ModelBundle bundle;
  if (!resume.empty()) {
    bundle = load_checkpoint(resume);
  } else {
    ModelConfig m = c.model;
    m.field = data.front().kind;
    std::vector<std::string> ids;
    for (const auto& d : data) ids.push_back(d.id);
    bundle = ModelBundle::create(m, ids, c.train.seed);
  }
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw IoError("cannot open '" + log_path + "'");
    log << "step,total,occupancy,geometry,color\n";
  }
  const auto report = train(bundle, data, c.train, [&](const StepLog& s) {
    if (log.is_open()) {
      log << s.step << ',' << fmt(s.loss.total) << ',' << fmt(s.loss.occupancy) << ',' << fmt(s.loss.geometry) << ','
          << fmt(s.loss.color) << '\n';
    }
    if (common.verbose) {
      std::cerr << "step " << s.step << " loss " << s.loss.total << " (occ " << s.loss.occupancy << ", geo "
                << s.loss.geometry << ", col " << s.loss.color << ")\n";
    }
  });
  if (report.stopped_early) std::cerr << "stopped early: " << report.stop_reason << "\n";
  std::cout << "steps " << report.steps_completed << "\n";
  std::cout << "eval_loss " << fmt(report.final_eval.total) << "\n";
  std::cout << "checkpoint_bytes " << encode_checkpoint(bundle).size() << "\n";
  return 0;
}

int cmd_reconstruct(const Common& common, const std::string& ckpt, const std::string& id, const std::string& out) {
  const RunConfig c = run_config(common);
  const auto bundle = load_checkpoint(ckpt);
  const auto tree = expand_object(bundle, id);
  const auto pts = isosurface_extract(bundle.nets, bundle.config, tree, c.iso);
  write_ply(out, pts);
  std::cout << "points " << pts.points.rows() << "\n";
  if (pts.degenerate > 0) std::cerr << "skipped " << pts.degenerate << " points with degenerate normals\n";
  return 0;
}

int cmd_render(const Common& common, const std::string& ckpt, const std::string& id, const std::string& camera_path,
               const std::string& renderer, const std::string& out) {
  const RunConfig c = run_config(common);
  const auto kind = parse_renderer(renderer);
  const auto bundle = load_checkpoint(ckpt);
  if (kind == RendererKind::Volume && bundle.config.field != FieldKind::Nerf) {
    throw DomainError("renderer 'volume' needs a nerf checkpoint");
  }
  if (kind == RendererKind::Sphere && bundle.config.field == FieldKind::Nerf) {
    throw DomainError("renderer 'sphere' needs an sdf checkpoint");
  }
  const Camera camera = load_camera(camera_path);
  const auto tree = expand_object(bundle, id);
  const Image img = render_image(bundle.nets, bundle.config, tree, camera, kind, c.render.options);
  write_ppm(out, img);
  return 0;
}

int cmd_eval(const Common& common, const std::string& ckpt, const std::string& data_path, const std::string& out) {
  const RunConfig c = run_config(common);
  const auto bundle = load_checkpoint(ckpt);
  const auto data = load_dataset(data_path);
  if (data.empty()) throw DomainError("dataset has no objects");
  EvalOptions options;
  options.iso = c.iso;
  const auto report = evaluate(bundle, data, options);
  std::ofstream f(out);
  if (!f) throw IoError("cannot open '" + out + "'");
  report.write_csv(f);
  if (common.verbose) report.write_csv(std::cerr);
  return 0;
}

int cmd_interp(const Common& common, const std::string& ckpt, const std::string& a, const std::string& b, int steps,
               const std::string& prefix) {
  const RunConfig c = run_config(common);
  const auto bundle = load_checkpoint(ckpt);
  if (bundle.config.field == FieldKind::Nerf) throw DomainError("latent interp writes point clouds; needs an sdf model");
  const Eigen::RowVectorXf za = bundle.latents.latent(bundle.latents.index_of(a)).value();
  const Eigen::RowVectorXf zb = bundle.latents.latent(bundle.latents.index_of(b)).value();
  const auto path = latent_interpolate(za, zb, steps);
  std::ofstream csv(prefix + ".csv");
  if (!csv) throw IoError("cannot open '" + prefix + ".csv'");
  csv << "index,t,file,points\n";
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto tree = expand_inference(bundle.nets, path[i], bundle.config.max_lod);
    const auto pts = isosurface_extract(bundle.nets, bundle.config, tree, c.iso);
    char name[32];
    std::snprintf(name, sizeof name, "_%03zu.ply", i);
    write_ply(prefix + name, pts);
    csv << i << ',' << fmt(static_cast<double>(i) / steps) << ',' << prefix + name << ',' << pts.points.rows() << '\n';
  }
  return 0;
}

int cmd_pca(const std::string& ckpt, const std::string& out) {
  const auto bundle = load_checkpoint(ckpt);
  const auto pca = latent_pca(bundle.latents.as_matrix().cast<double>());
  if (pca.rank_deficient) std::cerr << "warning: latents span fewer than two dimensions; second axis zeroed\n";
  std::ofstream f(out);
  if (!f) throw IoError("cannot open '" + out + "'");
  f << "object,pc1,pc2\n";
  for (std::size_t k = 0; k < bundle.latents.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    f << bundle.latents.ids()[k] << ',' << fmt(pca.coords(r, 0)) << ',' << fmt(pca.coords(r, 1)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive field network codec: data generation, training, reconstruction, rendering"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Seed for every random choice");
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)");
    sub->add_flag("--verbose,-v", common.verbose, "Progress on stderr");
    sub->add_option("--config", common.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  };

  std::string shapes, out, data, ckpt, id, camera, renderer = "sphere", resume, log, a, b;
  std::optional<int> max_lod, steps;
  std::optional<std::size_t> samples;
  std::optional<std::string> kind;
  int interp_steps = 8;

  auto* gen = app.add_subcommand("gen-data", "Generate a dataset from analytic shapes");
  add_common(gen);
  gen->add_option("--shapes", shapes, "Shape list (JSON)")->required();
  gen->add_option("--out", out, "Dataset file")->required();
  gen->add_option("--max-lod", max_lod, "Octree depth M");
  gen->add_option("--samples", samples, "Samples per object");
  gen->add_option("--kind", kind, "sdf, sdf-rgb or nerf");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  add_common(tr);
  tr->add_option("--data", data, "Dataset file")->required();
  tr->add_option("--out", out, "Checkpoint file")->required();
  tr->add_option("--steps", steps, "Optimization steps");
  tr->add_option("--resume", resume, "Start from this checkpoint");
  tr->add_option("--log", log, "Loss history CSV");

  auto* rec = app.add_subcommand("reconstruct", "Extract an oriented point cloud");
  add_common(rec);
  rec->add_option("--checkpoint", ckpt)->required();
  rec->add_option("--id", id, "Object id")->required();
  rec->add_option("--out", out, "PLY file")->required();

  auto* ren = app.add_subcommand("render", "Render an image");
  add_common(ren);
  ren->add_option("--checkpoint", ckpt)->required();
  ren->add_option("--id", id, "Object id")->required();
  ren->add_option("--camera", camera, "Camera (JSON)")->required();
  ren->add_option("--renderer", renderer, "sphere or volume");
  ren->add_option("--out", out, "PPM file")->required();

  auto* ev = app.add_subcommand("eval", "Metric report against a dataset");
  add_common(ev);
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--data", data, "Dataset file")->required();
  ev->add_option("--out", out, "CSV file")->required();

  auto* lat = app.add_subcommand("latent", "Latent space tools");
  lat->require_subcommand(1);
  auto* interp = lat->add_subcommand("interp", "Decode a linear path between two latents");
  add_common(interp);
  interp->add_option("--checkpoint", ckpt)->required();
  interp->add_option("--a", a, "First object id")->required();
  interp->add_option("--b", b, "Second object id")->required();
  interp->add_option("--steps", interp_steps, "Segments (steps + 1 clouds)");
  interp->add_option("--out", out, "Output prefix")->required();
  auto* pca = lat->add_subcommand("pca", "Two-dimensional PCA of the latent table");
  add_common(pca);
  pca->add_option("--checkpoint", ckpt)->required();
  pca->add_option("--out", out, "CSV file")->required();

  auto* defaults = app.add_subcommand("config-defaults", "Print the default run configuration");
  defaults->add_option("--config", common.config_path, "Merge this configuration over the defaults")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (auto* sub : {gen, tr, rec, ren, ev, interp, pca}) {
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, shapes, out, max_lod, samples, kind);
    if (tr->parsed()) return cmd_train(common, data, out, steps, resume, log);
    if (rec->parsed()) return cmd_reconstruct(common, ckpt, id, out);
    if (ren->parsed()) return cmd_render(common, ckpt, id, camera, renderer, out);
    if (ev->parsed()) return cmd_eval(common, ckpt, data, out);
    if (interp->parsed()) return cmd_interp(common, ckpt, a, b, interp_steps, out);
    if (pca->parsed()) return cmd_pca(ckpt, out);
    if (defaults->parsed()) {
      const auto cfg = common.config_path.empty() ? parse_run_config("{}") : load_run_config(common.config_path);
      std::cout << dump_run_config(cfg) << "\n";
      return 0;
    }
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

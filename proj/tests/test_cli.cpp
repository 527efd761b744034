#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "refine/checkpoint.hpp"
#include "refine/data.hpp"
#include "refine/writers.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "refine_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

void write_text(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

std::string read_text(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with stdout and stderr captured to files; returns the exit code.
int run(const std::string& args) {
  const std::string cmd = std::string(REFINE_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " +
                          path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_inputs() {
  write_text("shapes.json", R"({"objects": [
    {"id": "ball", "shape": {"type": "sphere", "radius": 0.5}, "color": [0.9, 0.2, 0.1]},
    {"id": "ring", "shape": {"type": "torus", "major": 0.5, "minor": 0.2}, "color": {"type": "position"}},
    {"id": "cube", "shape": {"type": "box", "half_extents": [0.4, 0.3, 0.3]}, "color": [0.2, 0.4, 0.8]}]})");
  write_text("run.json", R"({"model": {"field": "sdf-rgb", "latent_dim": 8, "max_lod": 3,
                                       "subdivision_hidden": 32, "head_hidden": [16]},
                             "train": {"samples_per_object": 64, "log_interval": 5},
                             "data": {"surface_samples": 200},
                             "render": {"width": 12, "height": 10, "samples_per_ray": 16},
                             "iso": {"samples_per_voxel": 1, "iterations": 1}})");
  write_text("camera.json", R"({"width": 12, "height": 10, "eye": [0, 0, 3], "target": [0, 0, 0],
                                "up": [0, 1, 0], "fov_deg": 40})");
}

}  // namespace

TEST_CASE("command line pipeline") {
  write_inputs();
  const std::string cfg = " --config " + path("run.json");

  REQUIRE(run("gen-data --shapes " + path("shapes.json") + " --out " + path("data.bin") +
              " --samples 400 --kind sdf-rgb" + cfg) == 0);
  const auto data = refine::load_dataset(path("data.bin"));
  REQUIRE(data.size() == 3);
  CHECK(data[0].max_lod() == 3);
  CHECK(data[0].size() == 400);
  CHECK(read_text(path("stdout.txt")).find("ball:") != std::string::npos);

  REQUIRE(run("train --data " + path("data.bin") + " --out " + path("model.bin") + " --steps 12 --log " +
              path("log.csv") + cfg) == 0);
  const auto out = read_text(path("stdout.txt"));
  CHECK(out.find("steps 12") != std::string::npos);
  CHECK(out.find("eval_loss") != std::string::npos);
  const auto bundle = refine::load_checkpoint(path("model.bin"));
  CHECK(bundle.latents.size() == 3);
  CHECK(read_text(path("log.csv")).find('\n') != std::string::npos);

  SUBCASE("same seed retrains to the same checkpoint") {
    REQUIRE(run("train --data " + path("data.bin") + " --out " + path("model2.bin") + " --steps 12" + cfg) == 0);
    CHECK(refine::bundles_identical(bundle, refine::load_checkpoint(path("model2.bin"))));
  }
  SUBCASE("resume continues from a checkpoint") {
    REQUIRE(run("train --data " + path("data.bin") + " --out " + path("model3.bin") + " --steps 2 --resume " +
                path("model.bin") + cfg) == 0);
    CHECK_FALSE(refine::bundles_identical(bundle, refine::load_checkpoint(path("model3.bin"))));
  }
  SUBCASE("eval writes a metric table") {
    REQUIRE(run("eval --checkpoint " + path("model.bin") + " --data " + path("data.bin") + " --out " +
                path("metrics.csv") + cfg) == 0);
    const auto csv = read_text(path("metrics.csv"));
    CHECK(csv.find("object,chamfer") != std::string::npos);
    CHECK(csv.find("\nball,") != std::string::npos);
    CHECK(csv.find("\nmean,") != std::string::npos);
  }
  SUBCASE("reconstruct and render") {
    REQUIRE(run("reconstruct --checkpoint " + path("model.bin") + " --id ring --out " + path("ring.ply") + cfg) == 0);
    CHECK(read_text(path("ring.ply")).rfind("ply\n", 0) == 0);
    REQUIRE(run("render --checkpoint " + path("model.bin") + " --id ball --camera " + path("camera.json") +
                " --out " + path("ball.ppm") + cfg) == 0);
    const auto img = refine::read_ppm(path("ball.ppm"));
    CHECK(img.width == 12);
    CHECK(img.height == 10);
    // Volume rendering needs a density field.
    CHECK(run("render --checkpoint " + path("model.bin") + " --id ball --camera " + path("camera.json") +
              " --renderer volume --out " + path("v.ppm") + cfg) == 1);
  }
  SUBCASE("latent tools") {
    REQUIRE(run("latent interp --checkpoint " + path("model.bin") + " --a ball --b cube --steps 2 --out " +
                path("walk") + cfg) == 0);
    CHECK(fs::exists(path("walk_000.ply")));
    CHECK(fs::exists(path("walk_002.ply")));
    CHECK(fs::exists(path("walk.csv")));
    REQUIRE(run("latent pca --checkpoint " + path("model.bin") + " --out " + path("pca.csv")) == 0);
    CHECK(read_text(path("pca.csv")).find("ring") != std::string::npos);
  }
  SUBCASE("error exit codes") {
    CHECK(run("render --checkpoint " + path("model.bin") + " --id nobody --camera " + path("camera.json") +
              " --out " + path("x.ppm")) == 1);
    CHECK(run("eval --checkpoint " + path("missing.bin") + " --data " + path("data.bin") + " --out " +
              path("m.csv")) == 2);
    CHECK(run("train --data " + path("data.bin") + " --out " + path("m.bin") + " --bogus") == 1);
    CHECK(run("render --checkpoint " + path("model.bin") + " --id ball --camera " + path("camera.json") +
              " --renderer raster --out " + path("x.ppm")) == 1);
    CHECK_FALSE(read_text(path("stderr.txt")).empty());
  }
}

TEST_CASE("volume rendering of a nerf model") {
  write_inputs();
  const std::string cfg = " --config " + path("run.json");
  REQUIRE(run("gen-data --shapes " + path("shapes.json") + " --out " + path("nerf.bin") +
              " --samples 200 --kind nerf" + cfg) == 0);
  // The dataset kind decides the model's field kind.
  REQUIRE(run("train --data " + path("nerf.bin") + " --out " + path("nerf_model.bin") + " --steps 3" + cfg) == 0);
  CHECK(refine::load_checkpoint(path("nerf_model.bin")).config.field == refine::FieldKind::Nerf);
  REQUIRE(run("render --checkpoint " + path("nerf_model.bin") + " --id ring --camera " + path("camera.json") +
              " --renderer volume --out " + path("ring.ppm") + cfg) == 0);
  CHECK(refine::read_ppm(path("ring.ppm")).width == 12);
  CHECK(run("render --checkpoint " + path("nerf_model.bin") + " --id ring --camera " + path("camera.json") +
            " --renderer sphere --out " + path("ring_s.ppm") + cfg) == 1);
}

TEST_CASE("config defaults print valid json") {
  REQUIRE(run("config-defaults") == 0);
  const auto text = read_text(path("stdout.txt"));
  CHECK(text.find("\"model\"") != std::string::npos);
  CHECK(text.find("\"w_geometry\"") != std::string::npos);
  write_text("defaults.json", text);
  CHECK(run("config-defaults --config " + path("defaults.json")) == 0);
  CHECK(read_text(path("stdout.txt")) == text);
}

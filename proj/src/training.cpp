#include "refine/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "refine/adam.hpp"
#include "refine/checkpoint.hpp"
#include "refine/decoders.hpp"
#include "refine/errors.hpp"
#include "refine/expansion.hpp"

namespace refine {

TrainConfig TrainConfig::defaults_for(FieldKind kind) {
  TrainConfig c;
  if (kind == FieldKind::Nerf) {
    c.w_occupancy = 2.0;
    c.w_geometry = 1.0;
    c.w_color = 1.0;
  }
  return c;
}

void TrainConfig::validate() const {
  if (steps < 0) throw DomainError("train: steps must be >= 0");
  if (samples_per_object < 1) throw DomainError("train: samples_per_object must be positive");
  if (objects_per_step < 0) throw DomainError("train: objects_per_step must be >= 0");
  if (!(lr_net >= 0) || !(lr_latent >= 0)) throw DomainError("train: learning rates must be >= 0");
  if (!(w_occupancy >= 0) || !(w_geometry >= 0) || !(w_color >= 0)) throw DomainError("train: loss weights must be >= 0");
  if (checkpoint_interval < 0 || log_interval < 0 || divergence_window < 1) {
    throw DomainError("train: intervals must be >= 0");
  }
}

void check_compatible(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data) {
  for (const auto& d : data) {
    bundle.latents.index_of(d.id);
    if (d.kind != bundle.config.field) {
      throw DomainError("object '" + d.id + "' has field kind " + to_string(d.kind) + " but the model expects " +
                        to_string(bundle.config.field));
    }
    if (d.max_lod() < bundle.config.max_lod) {
      throw DomainError("object '" + d.id + "' octree depth " + std::to_string(d.max_lod()) +
                        " is below the model depth " + std::to_string(bundle.config.max_lod));
    }
    if (d.size() == 0) throw DomainError("object '" + d.id + "' has no samples");
  }
}

LossResult loss_step(Tapef& tape, const ModelBundle& bundle, const std::vector<BatchItem>& batch,
                     const TrainConfig& config) {
  if (batch.empty()) throw DomainError("loss_step: empty batch");
  const auto& cfg = bundle.config;
  const bool color = has_color(cfg.field);
  std::vector<Tensorf> occ, geo, col;
  for (const auto& item : batch) {
    const FieldSampleSet& d = *item.data;
    const Tensorf& root = bundle.latents.latent(item.latent_index);
    auto expansion = expand_training(tape, bundle.nets, root, d.octree, cfg.max_lod);
    occ.push_back(tape.bce_with_logits(expansion.logits, expansion.targets));

    const auto n = static_cast<Eigen::Index>(item.rows.size());
    MatrixXf x(n, 3);
    MatrixXf g(n, 1);
    MatrixXf c(color ? n : 0, 3);
    MatrixXf v(cfg.field == FieldKind::Nerf ? n : 0, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = item.rows[static_cast<std::size_t>(i)];
      x.row(i) = d.coords.row(r);
      g(i, 0) = d.geometry[r];
      if (color) c.row(i) = d.colors.row(r);
      if (cfg.field == FieldKind::Nerf) v.row(i) = d.view_dirs.row(r);
    }
    std::optional<Tensorf> dirs;
    if (cfg.field == FieldKind::Nerf) dirs = Tensorf::constant(std::move(v));
    auto field = decode_field(tape, bundle.nets, cfg, expansion.tree, Tensorf::constant(std::move(x)), dirs);
    geo.push_back(tape.mse(field.geometry, g));
    if (color) col.push_back(tape.mse(*field.color, c));
  }
  const float inv = 1.0f / static_cast<float>(batch.size());
  auto mean = [&](const std::vector<Tensorf>& terms) {
    Tensorf acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return tape.scale(acc, inv);
  };
  LossResult out;
  const Tensorf lo = mean(occ);
  const Tensorf lg = mean(geo);
  out.loss = tape.add(tape.scale(lo, static_cast<float>(config.w_occupancy)),
                      tape.scale(lg, static_cast<float>(config.w_geometry)));
  out.parts.occupancy = lo.item();
  out.parts.geometry = lg.item();
  if (color) {
    const Tensorf lc = mean(col);
    out.loss = tape.add(out.loss, tape.scale(lc, static_cast<float>(config.w_color)));
    out.parts.color = lc.item();
  }
  out.parts.total = out.loss.item();
  if (!std::isfinite(out.parts.total)) {
    throw NumericalError("loss_step: non-finite loss (occupancy " + std::to_string(out.parts.occupancy) +
                         ", geometry " + std::to_string(out.parts.geometry) + ", color " +
                         std::to_string(out.parts.color) + ")");
  }
  return out;
}

std::vector<BatchItem> evaluation_batch(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data,
                                        int samples_per_object, std::uint64_t seed) {
  std::vector<BatchItem> batch;
  std::mt19937_64 rng(seed);
  for (const auto& d : data) {
    BatchItem item{&d, bundle.latents.index_of(d.id), {}};
    std::uniform_int_distribution<Eigen::Index> pick(0, d.size() - 1);
    for (int i = 0; i < samples_per_object; ++i) item.rows.push_back(pick(rng));
    batch.push_back(std::move(item));
  }
  return batch;
}

LossBreakdown evaluate_loss(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data,
                            const TrainConfig& config) {
  check_compatible(bundle, data);
  Tapef tape(false);
  const auto batch = evaluation_batch(bundle, data, config.samples_per_object, config.seed ^ 0xe7a1b2c3d4f5ULL);
  return loss_step(tape, bundle, batch, config).parts;
}

TrainReport train(ModelBundle& bundle, const std::vector<FieldSampleSet>& data, const TrainConfig& config,
                  const StepCallback& on_log) {
  config.validate();
  if (data.empty()) throw DomainError("train: dataset has no objects");
  check_compatible(bundle, data);
  const auto start = std::chrono::steady_clock::now();

  Adam<float> adam;
  adam.add_group(bundle.nets.parameters(), config.lr_net);
  adam.add_group(bundle.latents.parameters(), config.lr_latent);

  std::mt19937_64 rng(config.seed);
  const std::size_t k = data.size();
  const std::size_t per_step =
      config.objects_per_step == 0 ? k : std::min<std::size_t>(k, static_cast<std::size_t>(config.objects_per_step));
  std::vector<std::size_t> order(k);

  TrainReport report;
  double first_loss = 0;
  int above = 0;
  int consecutive_rejects = 0;
  for (int step = 0; step < config.steps; ++step) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (per_step < k) std::shuffle(order.begin(), order.end(), rng);
    std::vector<BatchItem> batch;
    for (std::size_t j = 0; j < per_step; ++j) {
      const FieldSampleSet& d = data[order[j]];
      BatchItem item{&d, bundle.latents.index_of(d.id), {}};
      std::uniform_int_distribution<Eigen::Index> pick(0, d.size() - 1);
      item.rows.resize(static_cast<std::size_t>(config.samples_per_object));
      for (auto& r : item.rows) r = pick(rng);
      batch.push_back(std::move(item));
    }

    adam.zero_grad();
    StepLog log{step, {}};
    try {
      Tapef tape;
      auto result = loss_step(tape, bundle, batch, config);
      tape.backward(result.loss);
      adam.step();
      log.loss = result.parts;
      consecutive_rejects = 0;
    } catch (const NumericalError&) {
      ++report.rejected_steps;
      if (++consecutive_rejects >= 10) throw;
      continue;
    }
    report.steps_completed = step + 1;
    if (step == 0) first_loss = log.loss.total;

    if (config.log_interval > 0 && (step % config.log_interval == 0 || step + 1 == config.steps)) {
      report.history.push_back(log);
      if (on_log) on_log(log);
    }
    if (config.checkpoint_interval > 0 && !config.checkpoint_path.empty() &&
        (step + 1) % config.checkpoint_interval == 0) {
      save_checkpoint(config.checkpoint_path, bundle);
    }
    above = log.loss.total > 10.0 * first_loss ? above + 1 : 0;
    if (above >= config.divergence_window) {
      report.stopped_early = true;
      report.stop_reason = "loss above 10x its initial value for " + std::to_string(above) + " steps";
      break;
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.final_eval = evaluate_loss(bundle, data, config);
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, bundle);
  return report;
}

}  // namespace refine

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "refine/data.hpp"
#include "refine/networks.hpp"
#include "refine/tensor.hpp"

namespace refine {

struct TrainConfig {
  double w_occupancy = 2.0;
  double w_geometry = 10.0;
  double w_color = 1.0;
  double lr_net = 2e-5;
  double lr_latent = 1e-4;
  /// 0 = every object each step.
  int objects_per_step = 0;
  int samples_per_object = 4096;
  int steps = 1000;
  std::uint64_t seed = 0;
  /// Write `checkpoint_path` every this many steps (0 = only at the end).
  int checkpoint_interval = 0;
  std::string checkpoint_path;
  int log_interval = 50;
  /// Stop once the loss has stayed above 10x its first value this many steps.
  int divergence_window = 1000;

  /// Loss weights (2, 10, 1) for Sdf/SdfRgb and (2, 1, 1) for Nerf.
  static TrainConfig defaults_for(FieldKind kind);
  void validate() const;
};

struct LossBreakdown {
  double total = 0;
  double occupancy = 0;
  double geometry = 0;
  double color = 0;  // 0 for Sdf
};

/// One object's share of a batch: the supervision set and the sample rows used.
struct BatchItem {
  const FieldSampleSet* data = nullptr;
  std::size_t latent_index = 0;
  std::vector<Eigen::Index> rows;
};

struct LossResult {
  Tensorf loss;
  LossBreakdown parts;
};

/// w_o L_o + w_g L_g + w_c L_c, each term averaged over the batch objects.
/// L_o is the mean BCE over every visited child of the GT-gated expansion,
/// L_g and L_c are mean squared errors over the sampled points; the color
/// term is left out for Sdf fields.
LossResult loss_step(Tapef& tape, const ModelBundle& bundle, const std::vector<BatchItem>& batch,
                     const TrainConfig& config);

struct StepLog {
  int step = 0;
  LossBreakdown loss;
};

struct TrainReport {
  std::vector<StepLog> history;
  int steps_completed = 0;
  double wall_seconds = 0;
  bool stopped_early = false;
  std::string stop_reason;
  std::size_t rejected_steps = 0;
  /// Loss on the fixed evaluation batch after training.
  LossBreakdown final_eval;
};

/// Fixed batch: every object with `samples_per_object` rows picked by a
/// generator seeded from `seed` alone.
std::vector<BatchItem> evaluation_batch(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data,
                                        int samples_per_object, std::uint64_t seed);

/// Loss on evaluation_batch without recording gradients.
LossBreakdown evaluate_loss(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data,
                            const TrainConfig& config);

using StepCallback = std::function<void(const StepLog&)>;

/// Optimizes `bundle` in place: Adam with the networks at lr_net and the
/// latent table at lr_latent. Each step draws objects_per_step objects
/// without replacement and samples_per_object rows per object with
/// replacement. Deterministic for a given seed.
TrainReport train(ModelBundle& bundle, const std::vector<FieldSampleSet>& data, const TrainConfig& config,
                  const StepCallback& on_log = {});

/// Checks that every object id in `data` is in the bundle and that the field
/// kinds and depths agree.
void check_compatible(const ModelBundle& bundle, const std::vector<FieldSampleSet>& data);

}  // namespace refine

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nrl/config.hpp"
#include "nrl/evaluation.hpp"
#include "nrl/losses.hpp"
#include "nrl/model.hpp"
#include "nrl/nn/optimizer.hpp"
#include "nrl/noise_injection.hpp"

namespace nrl {

enum class TrainPhase { initial, stage1, stage2, baseline, finished };

std::string_view to_string(TrainPhase phase);
TrainPhase parse_train_phase(std::string_view text);

// One record per completed epoch. Loss components are batch means over the
// epoch; components that the objective does not use stay at 0.
struct EpochMetrics {
  int epoch = 0;  // global, 0-based
  TrainPhase phase = TrainPhase::initial;
  double learning_rate = 0.0;
  int steps = 0;
  double loss = 0.0;
  double contrastive_loss = 0.0;
  double mix_loss = 0.0;
  double supervised_loss = 0.0;
  double sigma_mix = 1.0;
  double sigma_supervised = 1.0;
  double train_accuracy = -1.0;  // % on the given labels of the weak views seen; -1 in stage 1
  double test_accuracy = -1.0;   // % on the true test labels; -1 when no test set

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

// Everything needed to resume training. Randomness is stateless: batch order
// and augmentations are derived from (seed, epoch, ...), so the epoch counter
// doubles as the generator state.
struct TrainState {
  TrainConfig config;
  ModelConfig model_config;
  std::unique_ptr<NoiseRobustModel> model;
  // 1 x 2: log sigma_1 (mixup term), log sigma_2 (supervised term).
  std::unique_ptr<nn::Parameter> log_sigma;
  nn::Adam optimizer;
  int epoch = 0;  // next epoch to run
  TrainPhase phase = TrainPhase::initial;
  std::vector<EpochMetrics> history;

  UncertaintyWeights sigmas() const;
  // Every optimizable tensor, in checkpoint order: model parameters then log_sigma.
  std::vector<nn::Parameter*> all_parameters();
};

TrainState init_state(const TrainConfig& config, const ModelConfig& model_config);

struct TrainHooks {
  // Called after every epoch with the metrics just appended and, when a test
  // set was supplied, that epoch's full evaluation.
  std::function<void(TrainState&, const EpochMetrics&, const MetricsReport*)> on_epoch_end;
  // Called with one describe_batch line per batch when config.log_batches is set.
  std::function<void(const std::string&)> on_batch;
};

// Contrastive warm-up: strong-view pairs from label-free shuffled batches of
// N_b samples; only the encoder and projection head are updated.
void train_stage1(TrainState& state, const NoisyDataset& train, const NoisyDataset* test = nullptr,
                  const TrainHooks& hooks = {});
// Joint stage over mini-group batches: L_d (uncertainty-weighted L_m and L_s)
// plus lambda L_c, with the switches of TrainConfig.
void train_stage2(TrainState& state, const NoisyDataset& train, const NoisyDataset* test = nullptr,
                  const TrainHooks& hooks = {});
// Default / Label-Smooth: supervised training on weak views of the given
// labels, batches of N_b singletons, for stage1 + stage2 epochs.
void train_baseline(TrainState& state, const NoisyDataset& train, const NoisyDataset* test = nullptr,
                    const TrainHooks& hooks = {});

// Runs whatever the method prescribes from state.epoch to the end of the schedule.
void train(TrainState& state, const NoisyDataset& train, const NoisyDataset* test = nullptr,
           const TrainHooks& hooks = {});

// loss_only: objective value. gradients: also fill Parameter::grad (model and
// log_sigma) without stepping. update: gradients plus one Adam step.
enum class StepAction { loss_only, gradients, update };

// The method's objective on one batch (indices in group-major order) at the
// current parameters. Views depend only on (seed, epoch, sample index).
struct StepResult {
  double loss = 0.0;
  double contrastive_loss = 0.0;
  double mix_loss = 0.0;
  double supervised_loss = 0.0;
  int correct = 0;
};
StepResult stage2_step(TrainState& state, const NoisyDataset& train, const MiniGroupBatch& batch, int epoch,
                       double learning_rate, StepAction action);
// Contrastive warm-up objective on one label-free batch.
StepResult stage1_step(TrainState& state, const NoisyDataset& train, std::span<const std::size_t> indices,
                       int epoch, double learning_rate, StepAction action);

}  // namespace nrl

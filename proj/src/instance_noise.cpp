#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "nrl/config.hpp"
#include "nrl/error.hpp"
#include "nrl/evaluation.hpp"
#include "nrl/noise_injection.hpp"
#include "nrl/trainer.hpp"

namespace nrl {

namespace {

struct ProxyEpoch {
  int epoch = -1;
  double accuracy = 0.0;  // fraction
  std::vector<int> predictions;
};

struct StopProxy {};

}  // namespace

NoisyDataset inject_instance_dependent(const NoisyDataset& clean, double rate, const TrainConfig& proxy_config,
                                       std::uint64_t seed, double accuracy_tolerance) {
  clean.validate();
  for (const auto& r : clean.records) {
    if (r.corrupted || r.given_label != r.true_label) {
      throw ValidationError("inject_instance_dependent: input dataset is already corrupted (index " +
                            std::to_string(r.index) + ")");
    }
  }
  if (!(rate > 0.0 && rate < 0.5)) throw ValidationError("inject_instance_dependent: rate must lie in (0, 0.5)");
  if (!(accuracy_tolerance > 0.0)) throw ValidationError("inject_instance_dependent: tolerance must be > 0");
  if (clean.size() == 0) throw ValidationError("inject_instance_dependent: empty dataset");

  TrainConfig cfg = proxy_config;
  cfg.method = Method::default_baseline;
  cfg.seed = seed;
  const int channels = clean.images.front().channels;
  TrainState state = init_state(cfg, model_config_for(cfg, channels, clean.images.front().height,
                                                      clean.images.front().width, clean.num_classes));

  const double target = 1.0 - rate;
  const auto truth = clean.true_labels();
  std::optional<ProxyEpoch> chosen, nearest;
  double lowest = std::numeric_limits<double>::infinity();
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const TrainState& s, const EpochMetrics& m, const MetricsReport*) {
    ProxyEpoch pe;
    pe.epoch = m.epoch;
    pe.predictions = argmax_rows(predict_logits(*s.model, clean.images, cfg.eval_batch_size));
    long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += pe.predictions[i] == truth[i];
    pe.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    lowest = std::min(lowest, pe.accuracy);
    if (!nearest || std::abs(pe.accuracy - target) < std::abs(nearest->accuracy - target)) nearest = pe;
    if (std::abs(pe.accuracy - target) <= accuracy_tolerance) {
      chosen = std::move(pe);
      throw StopProxy{};
    }
  };
  try {
    train_baseline(state, clean, nullptr, hooks);
  } catch (const StopProxy&) {
  }

  if (!chosen) {
    if (!nearest || lowest > target + accuracy_tolerance) {
      throw TrainingError("inject_instance_dependent: no proxy epoch reached training accuracy <= " +
                          std::to_string(target + accuracy_tolerance) + "; closest was " +
                          std::to_string(lowest));
    }
    chosen = std::move(nearest);
  }

  NoisyDataset out = clean;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].given_label = chosen->predictions[i];
    out.records[i].corrupted = out.records[i].given_label != out.records[i].true_label;
  }
  out.provenance = NoiseProvenance{};
  out.provenance.kind = NoiseKind::instance_dependent;
  out.provenance.rate = rate;
  out.provenance.seed = seed;
  out.provenance.realized_rate = realized_noise_rate(out.records);
  out.provenance.proxy_epoch = chosen->epoch;
  out.provenance.proxy_train_accuracy = chosen->accuracy;
  return out;
}

}  // namespace nrl

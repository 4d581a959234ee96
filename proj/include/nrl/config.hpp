#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nrl/augmentation.hpp"
#include "nrl/grouping_sampler.hpp"
#include "nrl/model.hpp"
#include "nrl/noise_injection.hpp"

namespace nrl {

enum class Method { ours, default_baseline, label_smooth };
enum class MixupGrouping { intra_class, inter_class };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);
std::string_view to_string(MixupGrouping grouping);
MixupGrouping parse_mixup_grouping(std::string_view text);

// Training hyper-parameters. Defaults are the reference schedule: Adam
// (beta1 0.9), lr 1e-3, K=2 groups of M=4 (batch 8), 30 warm-up + 70 joint
// epochs, lr x0.1 every 10 epochs from the joint stage, tau 0.5, lambda 0.1.
struct TrainConfig {
  Method method = Method::ours;
  int stage1_epochs = 30;
  int stage2_epochs = 70;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 10;
  int groups_per_batch = 2;  // K
  int group_size = 4;        // M
  RemainderPolicy remainder_policy = RemainderPolicy::resample;
  MixupGrouping mixup_grouping = MixupGrouping::intra_class;
  double temperature = 0.5;
  double lambda = 0.1;
  bool include_positive_in_denominator = false;
  // Loss-component switches for ablations. L_s is always on for `ours`.
  bool use_mixup = true;
  bool use_contrastive = true;
  bool learn_sigma = true;
  double smooth_epsilon = 0.1;  // label_smooth only
  bool baseline_augment = false;  // baselines: train on weak views instead of the raw images
  std::uint64_t seed = 0;
  int eval_batch_size = 250;
  bool log_batches = false;
  // Architecture knobs; input shape and class count come from the dataset.
  EncoderKind encoder = EncoderKind::toy_cnn;
  int projection_layers = 1;
  int projection_dim = 128;
  int mixup_head_layers = 2;
  int toy_feature_dim = 256;
  AugmentConfig augment;

  int total_epochs() const { return stage1_epochs + stage2_epochs; }
  int batch_size() const { return groups_per_batch * group_size; }
  // Learning rate used during (0-based, global) epoch e.
  double learning_rate_at(int epoch) const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class DatasetSource { synthetic, folder };

// Class-conditional parametric shapes on a noisy background; see data_ingest.hpp.
struct SyntheticRecipe {
  int num_classes = 4;
  int train_size = 2000;
  int test_size = 1000;
  std::uint64_t seed = 0;
  double pixel_noise = 0.08;
  // Fraction of the image area the class shape spans, as [min, max] radius / (size / 2).
  double min_scale = 0.35;
  double max_scale = 0.75;

  friend bool operator==(const SyntheticRecipe&, const SyntheticRecipe&) = default;
};

struct DatasetSpec {
  DatasetSource source = DatasetSource::synthetic;
  std::string train_root;  // folder source: one subdirectory per class
  std::string test_root;
  int height = 16;
  int width = 16;
  int channels = 1;
  std::vector<std::string> class_names;  // folder source: optional explicit order
  bool standardize = false;              // subtract dataset mean / divide by std after loading
  SyntheticRecipe synthetic;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct NoiseSettings {
  NoiseKind kind = NoiseKind::none;
  double rate = 0.0;
  SymmetricConvention convention = SymmetricConvention::uniform_all;
  std::uint64_t seed = 0;
  std::string manifest;  // if set, given labels are read from this manifest instead
  double instance_tolerance = 0.02;
  int instance_proxy_epochs = 100;
  double instance_proxy_learning_rate = 3e-6;

  friend bool operator==(const NoiseSettings&, const NoiseSettings&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  NoiseSettings noise;
  TrainConfig train;
  bool export_features = false;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// JSON config file. Every key is optional (defaults above); unknown keys are
// rejected. Layout:
//   { "name": ..., "export_features": false,
//     "dataset": { "source", "train_root", "test_root", "height", "width", "channels",
//                  "class_names", "standardize",
//                  "synthetic": { "num_classes", "train_size", "test_size", "seed",
//                                 "pixel_noise", "min_scale", "max_scale" } },
//     "noise":   { "kind", "rate", "convention", "seed", "manifest",
//                  "instance_tolerance", "instance_proxy_epochs", "instance_proxy_learning_rate" },
//     "train":   { every TrainConfig field by name, "augment": { every AugmentConfig field } } }
std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

// The "train" object on its own (used by checkpoints).
std::string serialize_train_config(const TrainConfig& config);
TrainConfig parse_train_config(std::string_view json_text);

// Builds the model configuration for a dataset shape.
ModelConfig model_config_for(const TrainConfig& train, int channels, int height, int width, int num_classes);

}  // namespace nrl

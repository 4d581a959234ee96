#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nrl/image.hpp"
#include "nrl/random.hpp"

namespace nrl {

struct TrainConfig;

enum class NoiseKind { none, symmetric, asymmetric, instance_dependent };

// How symmetric noise distributes its mass. uniform_all spreads P evenly over
// all C classes (the true class included, so the effective flip rate is
// P(C-1)/C); uniform_off_diagonal spreads P over the C-1 wrong classes.
enum class SymmetricConvention { uniform_all, uniform_off_diagonal };

enum class MatrixKind { symmetric, asymmetric };

std::string_view to_string(NoiseKind kind);
std::string_view to_string(SymmetricConvention convention);
NoiseKind parse_noise_kind(std::string_view text);
SymmetricConvention parse_convention(std::string_view text);

// Row-stochastic C x C label corruption model: entry (t, n) is the probability
// that a sample of true class t is given label n.
class TransitionMatrix {
 public:
  TransitionMatrix(MatrixKind kind, int num_classes, std::vector<double> entries);

  int num_classes() const { return num_classes_; }
  MatrixKind kind() const { return kind_; }
  double operator()(int true_label, int given_label) const {
    return entries_[static_cast<std::size_t>(true_label) * num_classes_ + given_label];
  }
  std::span<const double> row(int true_label) const {
    return {entries_.data() + static_cast<std::size_t>(true_label) * num_classes_,
            static_cast<std::size_t>(num_classes_)};
  }

 private:
  MatrixKind kind_;
  int num_classes_;
  std::vector<double> entries_;
};

TransitionMatrix build_symmetric_matrix(double rate, int num_classes,
                                        SymmetricConvention convention = SymmetricConvention::uniform_all);
// Class t keeps its label with probability 1-P and flips to (t+1) mod C otherwise.
TransitionMatrix build_asymmetric_matrix(double rate, int num_classes);

struct CorruptionRecord {
  std::size_t index = 0;
  int true_label = 0;
  int given_label = 0;
  bool corrupted = false;

  friend bool operator==(const CorruptionRecord&, const CorruptionRecord&) = default;
};

// Picks a given label from a transition-matrix row.
class RowSampler {
 public:
  virtual ~RowSampler() = default;
  virtual int sample(std::span<const double> row, int true_label) = 0;
};

// Inverse-CDF draw from a seeded generator.
class SeededRowSampler final : public RowSampler {
 public:
  explicit SeededRowSampler(std::uint64_t seed) : rng_(seed) {}
  int sample(std::span<const double> row, int true_label) override;

 private:
  Rng rng_;
};

std::vector<CorruptionRecord> apply_transition(std::span<const int> labels, const TransitionMatrix& matrix,
                                               std::uint64_t seed);
std::vector<CorruptionRecord> apply_transition(std::span<const int> labels, const TransitionMatrix& matrix,
                                               RowSampler& sampler);

double realized_noise_rate(std::span<const CorruptionRecord> records);

// Provenance header carried by every dataset and manifest file.
struct NoiseProvenance {
  NoiseKind kind = NoiseKind::none;
  double rate = 0.0;
  std::uint64_t seed = 0;
  SymmetricConvention convention = SymmetricConvention::uniform_all;
  double realized_rate = 0.0;
  // Instance-dependent noise only: the proxy epoch whose predictions became
  // the given labels, and its training accuracy.
  int proxy_epoch = -1;
  double proxy_train_accuracy = -1.0;

  friend bool operator==(const NoiseProvenance&, const NoiseProvenance&) = default;
};

struct NoisyDataset {
  std::vector<Image> images;
  std::vector<CorruptionRecord> records;
  int num_classes = 0;
  NoiseProvenance provenance;

  std::size_t size() const { return images.size(); }
  std::vector<int> true_labels() const;
  std::vector<int> given_labels() const;
  // Throws ValidationError if sizes, label ranges or corruption flags disagree.
  void validate() const;
};

// Builds a zero-corruption dataset from clean labels.
NoisyDataset make_clean_dataset(std::vector<Image> images, std::span<const int> labels, int num_classes);

// Corrupts a clean dataset with symmetric or asymmetric noise.
NoisyDataset inject_instance_independent(const NoisyDataset& clean, NoiseKind kind, double rate,
                                         SymmetricConvention convention, std::uint64_t seed);

// Trains a Default-baseline proxy on the clean labels, picks the earliest epoch
// whose training accuracy is within `accuracy_tolerance` of 1-P (otherwise the
// nearest), and uses that epoch's predictions as the given labels.
NoisyDataset inject_instance_dependent(const NoisyDataset& clean, double rate, const TrainConfig& proxy_config,
                                       std::uint64_t seed, double accuracy_tolerance = 0.02);

// Corruption manifest. Text format, version 1:
//
//   # nrl corruption manifest v1
//   kind: symmetric
//   rate: 0.4
//   seed: 7
//   convention: uniform_all
//   num_classes: 4
//   realized_rate: 0.2985
//   proxy_epoch: -1
//   proxy_train_accuracy: -1
//   records: 2000
//   index,true_label,given_label,corrupted
//   0,1,1,0
//   ...
//
// Header keys appear in exactly this order; doubles are written in shortest
// round-trip form.
struct NoiseManifest {
  NoiseProvenance provenance;
  int num_classes = 0;
  std::vector<CorruptionRecord> records;
};

void write_manifest(const std::filesystem::path& path, const NoiseManifest& manifest);
NoiseManifest read_manifest(const std::filesystem::path& path);
NoiseManifest manifest_of(const NoisyDataset& dataset);
// Replaces the given labels of `clean` with the manifest's. True labels must match.
NoisyDataset apply_manifest(const NoisyDataset& clean, const NoiseManifest& manifest);

}  // namespace nrl

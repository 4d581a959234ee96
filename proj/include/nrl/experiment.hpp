#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nrl/config.hpp"
#include "nrl/data_ingest.hpp"
#include "nrl/evaluation.hpp"

namespace nrl {

// Run directory layout:
//
//   config.snapshot        the experiment config as parsed (JSON)
//   manifest.txt           corruption manifest of the training split
//   metrics.log            one JSON record per epoch (deterministic)
//   run.log                stage progress, warnings and wall-clock timings
//   batches.log            one line per batch (train.log_batches only)
//   checkpoints/epoch_NNN.ckpt   the last three epochs
//   checkpoints/best.ckpt        highest test accuracy
//   report.json, report.txt      last-3 average plus metrics of the nearest snapshot
//   roc.csv, confusion.csv       plot data for the selected snapshot
//   features.tsv           encoder features of the test split (export_features only)
//   error.txt              stage name and message when a run fails
struct RunResult {
  std::filesystem::path directory;
  MetricsReport report;
  std::vector<std::string> warnings;
};

// inject -> group -> train -> evaluate. Failures are rethrown with the stage
// name prefixed, after error.txt and the partial logs are written.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& run_dir);

// The corrupted training split and clean test split a config describes.
struct PreparedData {
  NoisyDataset train;
  NoisyDataset test;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
};
PreparedData prepare_data(const ExperimentConfig& config);

// Re-evaluates a finished run from its config snapshot and checkpoints.
MetricsReport evaluate_run(const std::filesystem::path& run_dir);
// Scores one checkpoint on the test split of `config`.
MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const ExperimentConfig& config);

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<double> rates;
  std::vector<int> group_sizes;       // M
  std::vector<int> mixup_head_layers; // N
  std::vector<int> projection_layers; // Z
  std::vector<std::uint64_t> seeds;
};

// Directory name of one grid point, e.g. "base-ours-symmetric-r0.4-m4-n2-z1-s0".
std::string sweep_run_name(const ExperimentConfig& config);
// Expands the grid (empty axes keep the base value) and runs each point in
// out_dir/<sweep_run_name>.
std::vector<std::filesystem::path> run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                                             const std::filesystem::path& out_dir);

// Tab-separated comparison table over run directories, one row per run:
// run, method, noise, rate, M, N, Z, seed, accuracy_last3_avg, macro_f1, mean AUC.
std::string aggregate_reports(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace nrl

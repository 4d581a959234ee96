#pragma once

#include <filesystem>
#include <string>

#include "nrl/trainer.hpp"

namespace nrl {

// Checkpoint file, version 1:
//
//   line 1: "# nrl checkpoint v1"
//   line 2: one-line JSON header: train config, model config, epoch, phase,
//           metrics history, parameter table [{name, rows, cols}] and the Adam
//           step count of every parameter
//   rest:   raw little-endian float64 payload: every parameter's values in
//           table order, then (m, v) for each parameter with a nonzero step count
//
// The table order is TrainState::all_parameters(), batch-norm running
// statistics included, so a loaded state resumes training exactly.
void save_checkpoint(const std::filesystem::path& path, TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

// One-line JSON record; the metrics.log format.
std::string epoch_metrics_to_json(const EpochMetrics& m);
EpochMetrics epoch_metrics_from_json(const std::string& line);

}  // namespace nrl

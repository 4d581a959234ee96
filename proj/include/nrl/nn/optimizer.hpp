#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "nrl/nn/layers.hpp"

namespace nrl::nn {

// Saved moments of one parameter; t == 0 means never updated.
struct AdamSlot {
  Mat m, v;
  long t = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with per-parameter step counts, so a parameter that starts receiving
// updates late (a head frozen during warm-up) still gets proper bias correction.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  void step(std::span<Parameter* const> params, double learning_rate);
  long steps_taken(const Parameter* p) const;

  // Moments in the order of `params`, for checkpointing.
  std::vector<AdamSlot> export_state(std::span<Parameter* const> params) const;
  void import_state(std::span<Parameter* const> params, std::vector<AdamSlot> slots);

 private:
  AdamOptions opt_;
  std::unordered_map<const Parameter*, AdamSlot> state_;
};

void zero_grad(std::span<Parameter* const> params);

}  // namespace nrl::nn

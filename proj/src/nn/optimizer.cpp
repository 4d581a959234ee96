#include "nrl/nn/optimizer.hpp"

#include <cmath>

#include "nrl/error.hpp"

namespace nrl::nn {

void Adam::step(std::span<Parameter* const> params, double learning_rate) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    AdamSlot& s = state_[p];
    if (s.t == 0) {
      s.m = Mat::Zero(p->value.rows(), p->value.cols());
      s.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    ++s.t;
    s.m = opt_.beta1 * s.m + (1.0 - opt_.beta1) * p->grad;
    s.v = opt_.beta2 * s.v + (1.0 - opt_.beta2) * p->grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(s.t));
    p->value.array() -= learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + opt_.eps);
  }
}

long Adam::steps_taken(const Parameter* p) const {
  const auto it = state_.find(p);
  return it == state_.end() ? 0 : it->second.t;
}

std::vector<AdamSlot> Adam::export_state(std::span<Parameter* const> params) const {
  std::vector<AdamSlot> out;
  out.reserve(params.size());
  for (const Parameter* p : params) {
    const auto it = state_.find(p);
    out.push_back(it == state_.end() ? AdamSlot{} : it->second);
  }
  return out;
}

void Adam::import_state(std::span<Parameter* const> params, std::vector<AdamSlot> slots) {
  if (slots.size() != params.size()) throw ValidationError("adam: state count does not match parameter count");
  state_.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    AdamSlot& s = slots[i];
    if (s.t == 0) continue;
    if (s.m.rows() != params[i]->value.rows() || s.m.cols() != params[i]->value.cols() ||
        s.v.rows() != s.m.rows() || s.v.cols() != s.m.cols()) {
      throw ValidationError("adam: state shape mismatch for " + params[i]->name);
    }
    state_[params[i]] = std::move(s);
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace nrl::nn

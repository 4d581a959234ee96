#pragma once

// Small fixtures shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "nrl/data_ingest.hpp"
#include "nrl/noise_injection.hpp"
#include "nrl/random.hpp"
#include "nrl/trainer.hpp"

namespace nrl::testing {

inline SyntheticSplits tiny_synthetic(int train = 64, int test = 32, std::uint64_t seed = 3, int classes = 4,
                                      int size = 8) {
  SyntheticRecipe r;
  r.num_classes = classes;
  r.train_size = train;
  r.test_size = test;
  r.seed = seed;
  return generate_synthetic(r, size, size, 1);
}

inline TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.stage1_epochs = 1;
  c.stage2_epochs = 1;
  c.seed = seed;
  c.toy_feature_dim = 8;
  c.projection_dim = 6;
  c.eval_batch_size = 16;
  return c;
}

inline TrainState tiny_state(const TrainConfig& c, const NoisyDataset& data) {
  const Image& img = data.images.front();
  return init_state(c, model_config_for(c, img.channels, img.height, img.width, data.num_classes));
}

inline Mat random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Relative difference; magnitudes below `floor` are compared absolutely.
inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace nrl::testing

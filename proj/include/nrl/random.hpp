#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace nrl {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Derives a child seed from a parent seed and a list of stream coordinates
// (epoch, sample index, view id, ...). Order matters.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

// Source of randomness for augmentation and sampling. Virtual so that tests can
// script every coin flip.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  // Uniform in [0, 1).
  virtual double uniform01() = 0;

  virtual bool bernoulli(double p) { return uniform01() < p; }
  virtual double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
};

// mt19937_64 with a platform-independent conversion to doubles, so sequences
// do not depend on the standard library's distribution implementations.
class Rng final : public RandomSource {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() override;
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nrl

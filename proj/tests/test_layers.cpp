#include <doctest.h>

#include <cmath>
#include <functional>

#include "nrl/nn/layers.hpp"
#include "nrl/nn/optimizer.hpp"
#include "support.hpp"

using namespace nrl;
using namespace nrl::nn;
using namespace nrl::testing;

namespace {

Tensor random_tensor(Rng& rng, int n, int h, int w, int c) {
  Tensor t(n, h, w, c);
  t.data = random_matrix(rng, n * h * w, c);
  return t;
}

// Checks input and parameter gradients of `m` against central differences of
// the scalar sum(R .* forward(x)).
void gradient_check(Module& m, Tensor x, Mode mode, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor y0 = m.forward(x, mode);
  const Mat r = random_matrix(rng, static_cast<int>(y0.data.rows()), static_cast<int>(y0.data.cols()));
  auto objective = [&](const Tensor& in) { return (m.forward(in, mode).data.array() * r.array()).sum(); };

  for (auto* p : m.parameters()) p->zero_grad();
  m.forward(x, mode);
  Tensor g = y0;
  g.data = r;
  const Tensor dx = m.backward(g);
  REQUIRE(dx.same_shape(x));

  const double h = 1e-6;
  for (int probe = 0; probe < 12; ++probe) {
    const Eigen::Index at = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(x.data.size())));
    const double saved = x.data.data()[at];
    x.data.data()[at] = saved + h;
    const double up = objective(x);
    x.data.data()[at] = saved - h;
    const double down = objective(x);
    x.data.data()[at] = saved;
    const double numeric = (up - down) / (2 * h);
    INFO("input[" << at << "] analytic " << dx.data.data()[at] << " numeric " << numeric);
    CHECK(rel_error(dx.data.data()[at], numeric) < 1e-4);
  }
  for (auto* p : m.parameters()) {
    if (!p->trainable) continue;
    const Mat analytic = p->grad;
    for (int probe = 0; probe < 6; ++probe) {
      const Eigen::Index at = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p->value.size())));
      const double saved = p->value.data()[at];
      p->value.data()[at] = saved + h;
      const double up = objective(x);
      p->value.data()[at] = saved - h;
      const double down = objective(x);
      p->value.data()[at] = saved;
      const double numeric = (up - down) / (2 * h);
      INFO(p->name << "[" << at << "] analytic " << analytic.data()[at] << " numeric " << numeric);
      CHECK(rel_error(analytic.data()[at], numeric) < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("linear") {
  Rng rng(1);
  Linear l("fc", 5, 3, rng);
  gradient_check(l, random_tensor(rng, 4, 1, 1, 5), Mode::train, 2);
  // forward is x W + b
  const Tensor x = random_tensor(rng, 2, 1, 1, 5);
  const Mat want = (x.data * l.weight().value).rowwise() + l.bias().value.row(0);
  CHECK((l.forward(x, Mode::eval).data - want).norm() < 1e-12);
}

TEST_CASE("conv2d with stride, padding and bias") {
  Rng rng(3);
  Conv2d c("conv", 2, 3, 3, 2, 1, true, rng);
  gradient_check(c, random_tensor(rng, 2, 5, 5, 2), Mode::train, 4);
  Conv2d c1("conv1", 3, 2, 1, 1, 0, false, rng);
  gradient_check(c1, random_tensor(rng, 1, 3, 4, 3), Mode::train, 5);
}

TEST_CASE("conv2d output shape") {
  Rng rng(1);
  Conv2d c("conv", 1, 4, 3, 2, 1, false, rng);
  const Tensor y = c.forward(random_tensor(rng, 2, 8, 8, 1), Mode::eval);
  CHECK(y.n == 2);
  CHECK(y.h == 4);
  CHECK(y.w == 4);
  CHECK(y.c == 4);
}

TEST_CASE("batch norm: train-mode gradient and eval uses running statistics") {
  Rng rng(6);
  BatchNorm2d bn("bn", 3);
  gradient_check(bn, random_tensor(rng, 3, 2, 2, 3), Mode::train, 7);

  BatchNorm2d fresh("bn2", 2);
  // fresh running stats are mean 0, var 1, so eval is (nearly) the identity
  const Tensor x = random_tensor(rng, 2, 2, 2, 2);
  CHECK((fresh.forward(x, Mode::eval).data - x.data / std::sqrt(1 + 1e-5)).norm() < 1e-9);
  // train mode normalizes each channel over the batch
  const Tensor y = fresh.forward(x, Mode::train);
  for (int ch = 0; ch < 2; ++ch) CHECK(std::abs(y.data.col(ch).mean()) < 1e-9);
}

TEST_CASE("activations and pooling") {
  Rng rng(8);
  ReLU relu;
  gradient_check(relu, random_tensor(rng, 2, 3, 3, 2), Mode::train, 9);
  Sigmoid sig;
  gradient_check(sig, random_tensor(rng, 3, 1, 1, 4), Mode::train, 10);
  MaxPool2d pool(3, 2, 1);
  gradient_check(pool, random_tensor(rng, 2, 5, 5, 2), Mode::train, 11);
  GlobalAvgPool gap;
  gradient_check(gap, random_tensor(rng, 2, 3, 4, 3), Mode::train, 12);
  Flatten flat;
  const Tensor f = flat.forward(random_tensor(rng, 2, 3, 4, 5), Mode::eval);
  CHECK(f.c == 60);
  CHECK(f.n == 2);
}

TEST_CASE("sequential and residual block") {
  Rng rng(13);
  Sequential s;
  s.emplace<Conv2d>("c", 2, 3, 3, 1, 1, false, rng);
  s.emplace<BatchNorm2d>("bn", 3);
  s.emplace<ReLU>();
  s.emplace<GlobalAvgPool>();
  s.emplace<Linear>("fc", 3, 2, rng);
  gradient_check(s, random_tensor(rng, 3, 4, 4, 2), Mode::train, 14);
  CHECK(s.parameters().size() == 7);  // conv w, bn gamma/beta/mean/var, fc w/b

  BasicBlock same("b1", 3, 3, 1, rng);
  gradient_check(same, random_tensor(rng, 2, 4, 4, 3), Mode::train, 15);
  BasicBlock down("b2", 2, 4, 2, rng);
  gradient_check(down, random_tensor(rng, 2, 4, 4, 2), Mode::train, 16);
}

TEST_CASE("adam step on a quadratic") {
  Parameter p("x", Mat::Constant(1, 2, 3.0));
  std::vector<Parameter*> params = {&p};
  Adam opt;
  for (int i = 0; i < 2000; ++i) {
    p.grad = 2 * p.value;  // d/dx x^2
    opt.step(params, 0.05);
  }
  CHECK(p.value.norm() < 1e-2);

  // first step moves each coordinate by lr regardless of gradient scale
  Parameter q("y", Mat::Zero(1, 2));
  q.grad << 100.0, -0.001;
  std::vector<Parameter*> qs = {&q};
  Adam fresh;
  fresh.step(qs, 0.1);
  CHECK(q.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(q.value(0, 1) == doctest::Approx(0.1).epsilon(1e-3));
}

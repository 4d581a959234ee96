#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nrl/nn/tensor.hpp"
#include "nrl/random.hpp"

namespace nrl::nn {

enum class Mode { train, eval };

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  // Buffers (batch-norm running statistics) are checkpointed but never optimized.
  bool trainable = true;

  Parameter(std::string n, Mat v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())), trainable(train) {}
  void zero_grad() { grad.setZero(); }
};

// A layer with an explicit backward pass. forward() caches what backward()
// needs, so each forward must be followed by at most one backward before the
// next forward. Gradients accumulate into Parameter::grad.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(std::vector<Parameter*>& out) { (void)out; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    collect(out);
    return out;
  }
};

class Linear final : public Module {
 public:
  // Weights and bias uniform in +-1/sqrt(in).
  Linear(const std::string& name, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;

  Parameter& weight() { return weight_; }  // in x out
  Parameter& bias() { return bias_; }      // 1 x out

 private:
  Parameter weight_;
  Parameter bias_;
  Mat input_;
};

class Conv2d final : public Module {
 public:
  // He-normal initialized weights, zero bias.
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias,
         Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  int cin_, cout_, k_, stride_, pad_;
  Parameter weight_;  // (k*k*cin) x cout, rows ordered (ky, kx, ci)
  std::unique_ptr<Parameter> bias_;
  Mat cols_;
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

class BatchNorm2d final : public Module {
 public:
  BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  Parameter gamma_, beta_, running_mean_, running_var_;
  double momentum_, eps_;
  Mat xhat_;
  Eigen::RowVectorXd inv_std_;
  Tensor shape_;
  bool train_mode_ = true;
};

class ReLU final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor input_;
};

class Sigmoid final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

class MaxPool2d final : public Module {
 public:
  MaxPool2d(int kernel, int stride, int pad = 0);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int k_, stride_, pad_;
  std::vector<Eigen::Index> argmax_;
  Tensor in_shape_;
};

class GlobalAvgPool final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int n_ = 0, h_ = 0, w_ = 0;
};

// NHWC (n, h, w, c) -> (n, 1, 1, h*w*c). The row-major storage is unchanged.
class Flatten final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int h_ = 0, w_ = 0, c_ = 0;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Module> m) {
    layers_.push_back(std::move(m));
    return *this;
  }
  template <typename T, typename... Args>
  T& emplace(Args&&... args) {
    auto p = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  std::size_t size() const { return layers_.size(); }
  Module& at(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

// Two 3x3 conv-BN stages with an identity or 1x1 projection shortcut.
class BasicBlock final : public Module {
 public:
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;

 private:
  Sequential main_;
  std::unique_ptr<Sequential> shortcut_;
  ReLU out_relu_;
};

}  // namespace nrl::nn

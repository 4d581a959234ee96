#include "nrl/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nrl/error.hpp"

namespace nrl::nn {

namespace {

Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight_(name + ".weight", uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias_(name + ".bias", uniform_matrix(1, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)) {}

Tensor Linear::forward(const Tensor& x, Mode) {
  if (x.h != 1 || x.w != 1 || x.c != weight_.value.rows()) {
    throw ValidationError(weight_.name + ": expected input width " + std::to_string(weight_.value.rows()) +
                          ", got " + x.shape_string());
  }
  input_ = x.data;
  Mat out = x.data * weight_.value;
  out.rowwise() += bias_.value.row(0);
  return Tensor::from_matrix(std::move(out));
}

Tensor Linear::backward(const Tensor& g) {
  weight_.grad.noalias() += input_.transpose() * g.data;
  bias_.grad += g.data.colwise().sum();
  return Tensor::from_matrix(g.data * weight_.value.transpose());
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad, bool bias,
               Rng& rng)
    : cin_(in_channels),
      cout_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(name + ".weight",
              normal_matrix(kernel * kernel * in_channels, out_channels,
                            std::sqrt(2.0 / (kernel * kernel * in_channels)), rng)) {
  if (bias) bias_ = std::make_unique<Parameter>(name + ".bias", Mat::Zero(1, out_channels));
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
  if (x.c != cin_) {
    throw ValidationError(weight_.name + ": expected " + std::to_string(cin_) + " input channels, got " +
                          x.shape_string());
  }
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
  out_w_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
  if (out_h_ < 1 || out_w_ < 1) throw ValidationError(weight_.name + ": input too small " + x.shape_string());

  const Eigen::Index patch = static_cast<Eigen::Index>(k_) * k_ * cin_;
  cols_.setZero(static_cast<Eigen::Index>(x.n) * out_h_ * out_w_, patch);
  const double* src = x.data.data();
  for (int b = 0; b < x.n; ++b)
    for (int oy = 0; oy < out_h_; ++oy)
      for (int ox = 0; ox < out_w_; ++ox) {
        double* row = cols_.data() + ((static_cast<Eigen::Index>(b) * out_h_ + oy) * out_w_ + ox) * patch;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < k_; ++kx) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= x.w) continue;
            const double* pix = src + ((static_cast<Eigen::Index>(b) * x.h + iy) * x.w + ix) * cin_;
            std::copy(pix, pix + cin_, row + (ky * k_ + kx) * cin_);
          }
        }
      }
  Tensor out;
  out.n = x.n;
  out.h = out_h_;
  out.w = out_w_;
  out.c = cout_;
  out.data.noalias() = cols_ * weight_.value;
  if (bias_) out.data.rowwise() += bias_->value.row(0);
  return out;
}

Tensor Conv2d::backward(const Tensor& g) {
  weight_.grad.noalias() += cols_.transpose() * g.data;
  if (bias_) bias_->grad += g.data.colwise().sum();
  const Mat dcols = g.data * weight_.value.transpose();
  Tensor dx(in_n_, in_h_, in_w_, cin_);
  const Eigen::Index patch = dcols.cols();
  double* dst = dx.data.data();
  for (int b = 0; b < in_n_; ++b)
    for (int oy = 0; oy < out_h_; ++oy)
      for (int ox = 0; ox < out_w_; ++ox) {
        const double* row = dcols.data() + ((static_cast<Eigen::Index>(b) * out_h_ + oy) * out_w_ + ox) * patch;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= in_h_) continue;
          for (int kx = 0; kx < k_; ++kx) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= in_w_) continue;
            double* pix = dst + ((static_cast<Eigen::Index>(b) * in_h_ + iy) * in_w_ + ix) * cin_;
            const double* part = row + (ky * k_ + kx) * cin_;
            for (int c = 0; c < cin_; ++c) pix[c] += part[c];
          }
        }
      }
  return dx;
}

void Conv2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(bias_.get());
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels, double momentum, double eps)
    : gamma_(name + ".gamma", Mat::Ones(1, channels)),
      beta_(name + ".beta", Mat::Zero(1, channels)),
      running_mean_(name + ".running_mean", Mat::Zero(1, channels), false),
      running_var_(name + ".running_var", Mat::Ones(1, channels), false),
      momentum_(momentum),
      eps_(eps) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  shape_ = Tensor();
  shape_.n = x.n;
  shape_.h = x.h;
  shape_.w = x.w;
  shape_.c = x.c;
  const double m = static_cast<double>(x.data.rows());
  Eigen::RowVectorXd mean, var;
  if (mode == Mode::train) {
    mean = x.data.colwise().mean();
    var = (x.data.rowwise() - mean).array().square().colwise().sum() / m;
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    running_mean_.value.row(0) = (1 - momentum_) * running_mean_.value.row(0) + momentum_ * mean;
    running_var_.value.row(0) = (1 - momentum_) * running_var_.value.row(0) + momentum_ * unbias * var;
  } else {
    mean = running_mean_.value.row(0);
    var = running_var_.value.row(0);
  }
  inv_std_ = (var.array() + eps_).rsqrt().matrix();
  xhat_ = ((x.data.rowwise() - mean).array().rowwise() * inv_std_.array()).matrix();
  train_mode_ = mode == Mode::train;
  Tensor out = shape_;
  out.data = (xhat_.array().rowwise() * gamma_.value.row(0).array()).matrix();
  out.data.rowwise() += beta_.value.row(0);
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
  gamma_.grad.row(0) += (g.data.array() * xhat_.array()).colwise().sum().matrix();
  beta_.grad.row(0) += g.data.colwise().sum();
  const Mat dxhat = (g.data.array().rowwise() * gamma_.value.row(0).array()).matrix();
  Tensor dx = shape_;
  if (!train_mode_) {
    dx.data = (dxhat.array().rowwise() * inv_std_.array()).matrix();
    return dx;
  }
  const double m = static_cast<double>(g.data.rows());
  const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dx = (dxhat.array() * xhat_.array()).colwise().sum().matrix();
  Mat t = (dxhat * m).rowwise() - sum_d;
  t -= (xhat_.array().rowwise() * sum_dx.array()).matrix();
  dx.data = ((t.array().rowwise() * inv_std_.array()) / m).matrix();
  return dx;
}

void BatchNorm2d::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x, Mode) {
  input_ = x;
  Tensor out = x;
  out.data = x.data.cwiseMax(0.0);
  return out;
}

Tensor ReLU::backward(const Tensor& g) {
  Tensor dx = g;
  dx.data = (input_.data.array() > 0.0).select(g.data, 0.0);
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Mode) {
  output_ = x;
  output_.data = (1.0 / (1.0 + (-x.data.array()).exp())).matrix();
  return output_;
}

Tensor Sigmoid::backward(const Tensor& g) {
  Tensor dx = g;
  dx.data = (g.data.array() * output_.data.array() * (1.0 - output_.data.array())).matrix();
  return dx;
}

// ---------------------------------------------------------------- pooling

MaxPool2d::MaxPool2d(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}

Tensor MaxPool2d::forward(const Tensor& x, Mode) {
  in_shape_ = Tensor();
  in_shape_.n = x.n;
  in_shape_.h = x.h;
  in_shape_.w = x.w;
  in_shape_.c = x.c;
  // Inputs smaller than the window pool to a single cell rather than failing.
  const int oh = std::max(1, (x.h + 2 * pad_ - k_) / stride_ + 1);
  const int ow = std::max(1, (x.w + 2 * pad_ - k_) / stride_ + 1);
  Tensor out(x.n, oh, ow, x.c);
  argmax_.assign(static_cast<std::size_t>(out.data.size()), 0);
  for (int b = 0; b < x.n; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index orow = (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
        for (int c = 0; c < x.c; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_idx = -1;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.w) continue;
              const Eigen::Index irow = (static_cast<Eigen::Index>(b) * x.h + iy) * x.w + ix;
              const double v = x.data(irow, c);
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = irow * x.c + c;
              }
            }
          }
          out.data(orow, c) = best;
          argmax_[static_cast<std::size_t>(orow * x.c + c)] = best_idx;
        }
      }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& g) {
  Tensor dx(in_shape_.n, in_shape_.h, in_shape_.w, in_shape_.c);
  for (Eigen::Index i = 0; i < g.data.size(); ++i) dx.data.data()[argmax_[static_cast<std::size_t>(i)]] += g.data.data()[i];
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  const int s = x.spatial();
  Mat out(x.n, x.c);
  for (int b = 0; b < x.n; ++b) out.row(b) = x.data.middleRows(static_cast<Eigen::Index>(b) * s, s).colwise().mean();
  return Tensor::from_matrix(std::move(out));
}

Tensor GlobalAvgPool::backward(const Tensor& g) {
  const int s = h_ * w_;
  Tensor dx(n_, h_, w_, static_cast<int>(g.data.cols()));
  for (int b = 0; b < n_; ++b) {
    dx.data.middleRows(static_cast<Eigen::Index>(b) * s, s).rowwise() = g.data.row(b) / static_cast<double>(s);
  }
  return dx;
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  h_ = x.h;
  w_ = x.w;
  c_ = x.c;
  Tensor out;
  out.n = x.n;
  out.c = x.h * x.w * x.c;
  out.data = Eigen::Map<const Mat>(x.data.data(), x.n, out.c);
  return out;
}

Tensor Flatten::backward(const Tensor& g) {
  Tensor dx;
  dx.n = g.n;
  dx.h = h_;
  dx.w = w_;
  dx.c = c_;
  dx.data = Eigen::Map<const Mat>(g.data.data(), static_cast<Eigen::Index>(g.n) * h_ * w_, c_);
  return dx;
}

// ---------------------------------------------------------------- containers

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor t = x;
  for (auto& layer : layers_) t = layer->forward(t, mode);
  return t;
}

Tensor Sequential::backward(const Tensor& g) {
  Tensor t = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) t = (*it)->backward(t);
  return t;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer->collect(out);
}

BasicBlock::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride, Rng& rng) {
  main_.emplace<Conv2d>(name + ".conv1", in_channels, out_channels, 3, stride, 1, false, rng);
  main_.emplace<BatchNorm2d>(name + ".bn1", out_channels);
  main_.emplace<ReLU>();
  main_.emplace<Conv2d>(name + ".conv2", out_channels, out_channels, 3, 1, 1, false, rng);
  main_.emplace<BatchNorm2d>(name + ".bn2", out_channels);
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = std::make_unique<Sequential>();
    shortcut_->emplace<Conv2d>(name + ".downsample.conv", in_channels, out_channels, 1, stride, 0, false, rng);
    shortcut_->emplace<BatchNorm2d>(name + ".downsample.bn", out_channels);
  }
}

Tensor BasicBlock::forward(const Tensor& x, Mode mode) {
  Tensor y = main_.forward(x, mode);
  if (shortcut_) {
    y.data += shortcut_->forward(x, mode).data;
  } else {
    y.data += x.data;
  }
  return out_relu_.forward(y, mode);
}

Tensor BasicBlock::backward(const Tensor& g) {
  const Tensor gy = out_relu_.backward(g);
  Tensor dx = main_.backward(gy);
  if (shortcut_) {
    dx.data += shortcut_->backward(gy).data;
  } else {
    dx.data += gy.data;
  }
  return dx;
}

void BasicBlock::collect(std::vector<Parameter*>& out) {
  main_.collect(out);
  if (shortcut_) shortcut_->collect(out);
}

}  // namespace nrl::nn

#pragma once

#include <span>
#include <string>

#include <Eigen/Dense>

#include "nrl/image.hpp"

namespace nrl::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Batch of feature maps stored NHWC: one row per (sample, y, x) position and
// one column per channel. Dense vectors are the h = w = 1 case, so a batch of
// B feature vectors of width d is simply a B x d matrix.
struct Tensor {
  int n = 0;
  int h = 1;
  int w = 1;
  int c = 0;
  Mat data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_) : n(n_), h(h_), w(w_), c(c_), data(Mat::Zero(n_ * h_ * w_, c_)) {}
  static Tensor from_matrix(Mat m) {
    Tensor t;
    t.n = static_cast<int>(m.rows());
    t.c = static_cast<int>(m.cols());
    t.data = std::move(m);
    return t;
  }

  int spatial() const { return h * w; }
  bool same_shape(const Tensor& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
  std::string shape_string() const;
};

// Packs CHW images into an NHWC tensor. All images must share one shape.
Tensor images_to_tensor(std::span<const Image> images);

}  // namespace nrl::nn

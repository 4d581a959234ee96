#include "nrl/nn/tensor.hpp"

#include "nrl/error.hpp"

namespace nrl::nn {

std::string Tensor::shape_string() const {
  return "(" + std::to_string(n) + ", " + std::to_string(h) + ", " + std::to_string(w) + ", " + std::to_string(c) + ")";
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ValidationError("images_to_tensor: empty batch");
  const Image& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.height, first.width, first.channels);
  const std::size_t plane = first.plane_size();
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& img = images[b];
    if (!img.same_shape(first)) throw ValidationError("images_to_tensor: mixed image shapes in one batch");
    double* dst = t.data.data() + b * plane * first.channels;
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < first.channels; ++c) dst[p * first.channels + c] = img.pixels[c * plane + p];
    }
  }
  return t;
}

}  // namespace nrl::nn

#include "nrl/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nrl/error.hpp"

namespace nrl {

namespace {

void check_image(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("augmentation: unsupported channel count " + std::to_string(image.channels) +
                          " (expected 1 or 3)");
  }
  if (image.height < 1 || image.width < 1 || image.pixels.size() != image.channels * image.plane_size()) {
    throw ValidationError("augmentation: malformed image buffer");
  }
}

// Reflect index into [0, n) without repeating the edge pixel (the "reflect" mode).
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void clamp01(Image& image) {
  for (double& v : image.pixels) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(Image& image, double factor) {
  for (double& v : image.pixels) v *= factor;
  clamp01(image);
}

void adjust_contrast(Image& image, double factor) {
  // Blend with the mean luminance of the whole image.
  double mean = 0.0;
  const std::size_t plane = image.plane_size();
  if (image.channels == 3) {
    for (std::size_t p = 0; p < plane; ++p) {
      mean += 0.299 * image.pixels[p] + 0.587 * image.pixels[plane + p] + 0.114 * image.pixels[2 * plane + p];
    }
  } else {
    for (std::size_t p = 0; p < plane; ++p) mean += image.pixels[p];
  }
  mean /= static_cast<double>(plane);
  for (double& v : image.pixels) v = (v - mean) * factor + mean;
  clamp01(image);
}

void adjust_saturation(Image& image, double factor) {
  const std::size_t plane = image.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    const double gray =
        0.299 * image.pixels[p] + 0.587 * image.pixels[plane + p] + 0.114 * image.pixels[2 * plane + p];
    for (int c = 0; c < 3; ++c) {
      double& v = image.pixels[c * plane + p];
      v = (v - gray) * factor + gray;
    }
  }
  clamp01(image);
}

}  // namespace

Image rotate(const Image& image, double angle_deg) {
  Image out(image.channels, image.height, image.width);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cy = 0.5 * (image.height - 1);
  const double cx = 0.5 * (image.width - 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // Inverse map: source = R(-theta) * (dest - center) + center.
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const int xa = reflect(x0, image.width), xb = reflect(x0 + 1, image.width);
      const int ya = reflect(y0, image.height), yb = reflect(y0 + 1, image.height);
      for (int ch = 0; ch < image.channels; ++ch) {
        const double v = (1 - fy) * ((1 - fx) * image.at(ch, ya, xa) + fx * image.at(ch, ya, xb)) +
                         fy * ((1 - fx) * image.at(ch, yb, xa) + fx * image.at(ch, yb, xb));
        out.at(ch, y, x) = v;
      }
    }
  }
  return out;
}

Image flip_vertical(const Image& image) {
  Image out(image.channels, image.height, image.width);
  for (int ch = 0; ch < image.channels; ++ch)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) out.at(ch, y, x) = image.at(ch, image.height - 1 - y, x);
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.channels, image.height, image.width);
  for (int ch = 0; ch < image.channels; ++ch)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) out.at(ch, y, x) = image.at(ch, y, image.width - 1 - x);
  return out;
}

int blur_kernel_size(double sigma) {
  int size = static_cast<int>(std::lround(4.0 * sigma));
  if (size % 2 == 0) ++size;
  return std::max(size, 1);
}

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_blur: sigma must be positive");
  const int radius = blur_kernel_size(sigma) / 2;
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (double& k : kernel) k /= total;

  Image tmp(image.channels, image.height, image.width);
  for (int ch = 0; ch < image.channels; ++ch)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image.at(ch, y, reflect(x + k, image.width));
        tmp.at(ch, y, x) = acc;
      }
  Image out(image.channels, image.height, image.width);
  for (int ch = 0; ch < image.channels; ++ch)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(ch, reflect(y + k, image.height), x);
        out.at(ch, y, x) = acc;
      }
  return out;
}

Image weak_view(const Image& image, RandomSource& rng, const AugmentConfig& cfg, AugmentTrace* trace) {
  check_image(image);
  AugmentTrace local;
  AugmentTrace& t = trace ? *trace : local;
  Image out = image;
  if (rng.bernoulli(cfg.rotate_prob)) {
    t.rotated = true;
    t.angle_deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    out = rotate(out, t.angle_deg);
  }
  if (rng.bernoulli(cfg.vflip_prob)) {
    t.vflip = true;
    out = flip_vertical(out);
  }
  if (rng.bernoulli(cfg.hflip_prob)) {
    t.hflip = true;
    out = flip_horizontal(out);
  }
  return out;
}

Image strong_view(const Image& image, RandomSource& rng, const AugmentConfig& cfg, AugmentTrace* trace) {
  AugmentTrace local;
  AugmentTrace& t = trace ? *trace : local;
  Image out = weak_view(image, rng, cfg, &t);
  if (rng.bernoulli(cfg.blur_prob)) {
    t.blurred = true;
    t.blur_sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
    out = gaussian_blur(out, t.blur_sigma);
  }
  if (rng.bernoulli(cfg.jitter_prob)) {
    t.jittered = true;
    t.brightness = rng.uniform(cfg.jitter_min, cfg.jitter_max);
    t.contrast = rng.uniform(cfg.jitter_min, cfg.jitter_max);
    adjust_brightness(out, t.brightness);
    adjust_contrast(out, t.contrast);
    // Color jitter only for three-channel images; grayscale gets brightness/contrast.
    if (out.channels == 3) {
      t.saturation_applied = true;
      t.saturation = rng.uniform(cfg.jitter_min, cfg.jitter_max);
      adjust_saturation(out, t.saturation);
    }
  }
  clamp01(out);
  return out;
}

ViewTriplet make_triplet(const Image& image, RandomSource& rng, const AugmentConfig& cfg, std::size_t source_index) {
  ViewTriplet v;
  v.weak = weak_view(image, rng, cfg);
  v.strong_a = strong_view(image, rng, cfg);
  v.strong_b = strong_view(image, rng, cfg);
  v.source_index = source_index;
  return v;
}

Image weak_view_seeded(const Image& image, std::uint64_t seed, const AugmentConfig& cfg) {
  Rng rng(derive_seed(seed, {0}));
  return weak_view(image, rng, cfg);
}

Image strong_view_seeded(const Image& image, std::uint64_t seed, int which, const AugmentConfig& cfg) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(1 + which)}));
  return strong_view(image, rng, cfg);
}

}  // namespace nrl

#pragma once

#include <cstddef>
#include <cstdint>

#include "nrl/image.hpp"
#include "nrl/random.hpp"

namespace nrl {

// Augmentation strengths. The probabilities follow the 50% rule of the
// method; magnitudes are conservative defaults for medical content.
struct AugmentConfig {
  double rotate_prob = 0.5;
  double max_rotation_deg = 15.0;
  double vflip_prob = 0.5;
  double hflip_prob = 0.5;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.0;
  double jitter_prob = 0.5;
  double jitter_min = 0.8;  // brightness / contrast / saturation factor range
  double jitter_max = 1.2;

  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

// What a view pipeline actually did; filled when a non-null pointer is passed.
struct AugmentTrace {
  bool rotated = false;
  double angle_deg = 0.0;
  bool vflip = false;
  bool hflip = false;
  bool blurred = false;
  double blur_sigma = 0.0;
  bool jittered = false;
  double brightness = 1.0;
  double contrast = 1.0;
  bool saturation_applied = false;
  double saturation = 1.0;
};

struct ViewTriplet {
  Image weak;
  Image strong_a;
  Image strong_b;
  std::size_t source_index = 0;
};

// Rotation (reflection padding, bilinear), vertical flip and horizontal flip,
// each with its configured probability. RNG draw order: rotate?, [angle],
// vflip?, hflip?.
Image weak_view(const Image& image, RandomSource& rng, const AugmentConfig& cfg = {},
                AugmentTrace* trace = nullptr);

// weak_view followed by Gaussian blur and color (3-channel) or grayscale
// (1-channel) jitter, each with its configured probability; clamped to [0, 1].
// No cropping or erasing.
Image strong_view(const Image& image, RandomSource& rng, const AugmentConfig& cfg = {},
                  AugmentTrace* trace = nullptr);

// Draws weak, strong_a and strong_b in that order from one generator.
ViewTriplet make_triplet(const Image& image, RandomSource& rng, const AugmentConfig& cfg = {},
                         std::size_t source_index = 0);

// Independent streams per view, derived from (seed, 0|1|2), so the weak view
// does not depend on whether the strong views are drawn.
Image weak_view_seeded(const Image& image, std::uint64_t seed, const AugmentConfig& cfg = {});
Image strong_view_seeded(const Image& image, std::uint64_t seed, int which, const AugmentConfig& cfg = {});

// Building blocks, exposed for tests.
Image rotate(const Image& image, double angle_deg);
Image flip_vertical(const Image& image);
Image flip_horizontal(const Image& image);
Image gaussian_blur(const Image& image, double sigma);
// Odd kernel width closest to 4 sigma.
int blur_kernel_size(double sigma);

}  // namespace nrl

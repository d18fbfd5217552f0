#pragma once

#include <cstdint>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/model/encoder.hpp"
#include "rrl/numeric/random.hpp"

namespace rrl {

/// Per-view augmentation probabilities and ranges. Setting a probability to
/// zero disables that transform.
struct AugmentConfig {
  double flip_p = 0.5;
  double jitter_p = 0.8;
  double brightness = 0.2;  // additive offset drawn from [-b, b]
  double contrast = 0.2;    // gain about the image mean drawn from [1 - c, 1 + c]
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;  // pixels
  double blur_sigma_max = 2.0;

  void validate() const;
  static AugmentConfig none();
};

struct AugmentedView {
  Image image;
  LandmarkSet landmarks;
  bool flipped = false;
};

struct ViewPair {
  AugmentedView first;
  AugmentedView second;
};

// Horizontal flip, brightness/contrast jitter, then Gaussian blur, each applied
// with its own probability. Landmarks follow the flip (x -> 1 - x).
AugmentedView augment_view(const Image& image, const LandmarkSet& landmarks, const AugmentConfig& config, Rng& rng);

// Two views with independent randomness derived from `seed`.
ViewPair make_view_pair(const Image& image, const LandmarkSet& landmarks, const AugmentConfig& config,
                        std::uint64_t seed);

Image flip_image(const Image& image);
// Separable Gaussian blur truncated at 3 sigma with edge replication.
Image gaussian_blur(const Image& image, double sigma);

}  // namespace rrl

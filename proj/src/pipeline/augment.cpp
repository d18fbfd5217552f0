#include "rrl/pipeline/augment.hpp"

#include <cmath>

#include "rrl/error.hpp"

namespace rrl {

void AugmentConfig::validate() const {
  for (double p : {flip_p, jitter_p, blur_p}) require(p >= 0.0 && p <= 1.0, "augment: probabilities must lie in [0, 1]");
  require(brightness >= 0.0 && contrast >= 0.0 && contrast < 1.0, "augment: jitter ranges out of bounds");
  require(blur_sigma_min > 0.0 && blur_sigma_max >= blur_sigma_min, "augment: blur sigma range is invalid");
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.flip_p = c.jitter_p = c.blur_p = 0.0;
  return c;
}

Image flip_image(const Image& image) { return image.rowwise().reverse(); }

Image gaussian_blur(const Image& image, double sigma) {
  require(sigma > 0.0, "gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  kernel /= kernel.sum();
  const auto rows = static_cast<int>(image.rows()), cols = static_cast<int>(image.cols());
  Image tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image(r, std::clamp(c + i, 0, cols - 1));
      tmp(r, c) = acc;
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(std::clamp(r + i, 0, rows - 1), c);
      out(r, c) = acc;
    }
  }
  return out;
}

AugmentedView augment_view(const Image& image, const LandmarkSet& landmarks, const AugmentConfig& config, Rng& rng) {
  config.validate();
  // Draw every random number up front so the stream layout is fixed.
  const bool flip = rng.bernoulli(config.flip_p);
  const bool jitter = rng.bernoulli(config.jitter_p);
  const double offset = rng.uniform(-config.brightness, config.brightness);
  const double gain = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast);
  const bool blur = rng.bernoulli(config.blur_p);
  const double sigma = rng.uniform(config.blur_sigma_min, config.blur_sigma_max);

  AugmentedView view{flip ? flip_image(image) : image, flip ? landmarks.flipped_horizontally() : landmarks, flip};
  if (jitter) {
    const double mu = view.image.mean();
    view.image = ((view.image.array() - mu) * gain + mu + offset).matrix();
  }
  if (blur) view.image = gaussian_blur(view.image, sigma);
  view.image = view.image.cwiseMax(0.0).cwiseMin(1.0);
  return view;
}

ViewPair make_view_pair(const Image& image, const LandmarkSet& landmarks, const AugmentConfig& config,
                        std::uint64_t seed) {
  const Rng base(seed);
  Rng first = base.fork(1), second = base.fork(2);
  return {augment_view(image, landmarks, config, first), augment_view(image, landmarks, config, second)};
}

}  // namespace rrl

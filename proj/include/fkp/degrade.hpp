#pragma once

#include <cstdint>

#include "fkp/diff/tape.hpp"
#include "fkp/image.hpp"
#include "fkp/kernel.hpp"
#include "fkp/rng.hpp"

namespace fkp::degrade {

/// Blur, stride-s subsampling and additive white Gaussian noise:
///   y = (x conv k) subsampled at rows/cols 0, s, 2s, ... + n,  n ~ N(0, noise_level^2)
struct DegradationConfig {
  int scale = 2;
  double noise_level = 0.0;  // fraction of the maximum pixel value
  std::uint64_t seed = 0;
};

/// Output extents of a degradation: ceil(H/s) x ceil(W/s).
std::size_t output_extent(std::size_t extent, int scale);

/// Noiseless blur + subsample. The convolution uses the flipped kernel and
/// replicate padding of side/2 pixels.
Image blur_downsample(const Image& x, const Kernel& k, int scale);

/// blur_downsample followed by noise drawn from the "image-noise" stream of cfg.seed.
Image degrade(const Image& x, const Kernel& k, const DegradationConfig& cfg);

struct DegradeGradient {
  Image image;
  Kernel kernel;
};

/// Adjoint of blur_downsample: gradients w.r.t. image and kernel of
/// <upstream, blur_downsample(x, k)>.
DegradeGradient degrade_grad(const Image& x, const Kernel& k, int scale, const Image& upstream);

/// x + N(0, level^2) per pixel, no clipping.
Image add_image_noise(const Image& x, double level, Rng& rng);

/// blur_downsample as a tape primitive. `image` has shape [C, H, W] and
/// `kernel` holds side*side values (any shape). Result shape [C, ceil(H/s), ceil(W/s)].
diff::Var blur_downsample(diff::Var image, diff::Var kernel, int scale);

}  // namespace fkp::degrade

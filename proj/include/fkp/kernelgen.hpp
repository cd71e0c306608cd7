#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "fkp/kernel.hpp"
#include "fkp/rng.hpp"

namespace fkp::kernelgen {

/// Sub-pixel displacement of the Gaussian mean from the grid midpoint.
struct CenterOffset {
  double dy = 0.0;
  double dx = 0.0;

  bool operator==(const CenterOffset&) const = default;
};

/// One anisotropic Gaussian blur: principal widths, rotation, mean offset.
struct GaussianKernelParams {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double angle = 0.0;  // radians in [0, pi)
  CenterOffset center_offset;

  bool operator==(const GaussianKernelParams&) const = default;
};

struct SigmaRange {
  double lo;
  double hi;
};

/// Throws ConfigError unless scale is 2, 3 or 4.
void require_supported_scale(int scale);

/// Kernel side 4s + 3.
std::size_t kernel_side(int scale);
/// Width range [0.175 s, 2.5 s].
SigmaRange sigma_range(int scale);

/// Offset (-(s-1)/2, -(s-1)/2) that centers the kernel on the pixels kept by
/// stride-s subsampling anchored at index 0.
CenterOffset shift_for_scale(int scale);

/// Uniform widths in sigma_range(scale), uniform angle in [0, pi). The center
/// offset is shift_for_scale(scale), or zero when `shifted` is false.
GaussianKernelParams sample_params(int scale, Rng& rng, bool shifted = true);

/// Throws ParameterError when a width is below 1e-6 or not finite.
void validate(const GaussianKernelParams& params);
/// Additionally checks the widths lie in sigma_range(scale) and angle in [0, pi).
void validate(const GaussianKernelParams& params, int scale);

/// Gaussian density on the grid, normalized to sum 1.
Kernel render_kernel(const GaussianKernelParams& params, std::size_t side);

/// Rendered kernel with its derivatives w.r.t. (sigma1, sigma2, angle).
struct KernelJacobian {
  Kernel kernel;
  std::array<std::vector<double>, 3> partials;
};

KernelJacobian render_kernel_jacobian(const GaussianKernelParams& params, std::size_t side);

/// Multiply each weight by (1 + u), u ~ U[-amplitude, amplitude], clamp
/// negatives to 0 and renormalize. Throws DegenerateError if nothing survives.
Kernel perturb_kernel(const Kernel& k, double amplitude, Rng& rng);

}  // namespace fkp::kernelgen

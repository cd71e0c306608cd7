#pragma once

// Blur-kernel estimation from a low-resolution image by optimizing the latent
// code of a frozen flow prior, plus a parametric-Gaussian baseline.
//
//   reference mode: the HR image is known; only the latent is optimized.
//   joint mode:     the HR image is co-estimated by direct pixel optimization
//                   with a total-variation penalty, alternating with latent steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fkp/flow.hpp"
#include "fkp/image.hpp"
#include "fkp/kernel.hpp"
#include "fkp/kernelgen.hpp"
#include "fkp/rng.hpp"

namespace fkp::estimate {

enum class Mode { reference, joint };

struct EstimationConfig {
  Mode mode = Mode::reference;
  std::size_t iterations = 1000;
  double latent_lr = 0.1;
  double image_lr = 0.005;
  double tv_weight = 0.01;
  std::uint64_t seed = 0;
  bool project_every_step = true;
  // joint mode: when false the HR image stays at its initial value
  bool optimize_image = true;
  // parametric baseline step size on (sigma1, sigma2, angle)
  double param_lr = 0.05;
};

struct EstimationResult {
  Kernel kernel;                      // post-processed kernel at the best iterate
  std::vector<double> latent;         // best latent (empty for the parametric baseline)
  std::optional<Image> image;         // joint mode only
  std::optional<kernelgen::GaussianKernelParams> params;  // parametric baseline only
  std::vector<double> loss_trace;     // data fidelity evaluated at every iterate
  std::size_t best_iteration = 0;
  double best_loss = 0.0;
};

/// Called after each update with the 0-based iteration and the new latent.
using LatentObserver = std::function<void(std::size_t iteration, std::span<const double> latent)>;

/// z ~ N(0, I) projected to norm sqrt(D), from the "latent-init" stream.
std::vector<double> init_latent(const flow::FlowModel& model, Rng& rng);

/// z * sqrt(D) / |z|; throws DegenerateError for the zero vector.
std::vector<double> project_sphere(std::span<const double> z);

/// Mean squared error between blur_downsample(x, k) and y.
double data_fidelity(const Image& y, const Image& x, const Kernel& k, int scale);

/// Total variation: absolute forward differences along both axes, summed and
/// divided by the number of pixels.
double total_variation(const Image& x);
/// The same on a [C, H, W] tape node, differentiable in x.
diff::Var total_variation(diff::Var x);

struct Objective {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Reference-mode loss at latent z and its gradient w.r.t. z.
Objective reference_objective(const Image& y, const Image& x_ref, const flow::FlowModel& model, std::span<const double> z);

EstimationResult estimate_reference(const Image& y, const Image& x_ref, const flow::FlowModel& model,
                                    const EstimationConfig& cfg, const LatentObserver& observer = {});

/// `initial_image` overrides the nearest-neighbor upsampling of y.
EstimationResult estimate_joint(const Image& y, const flow::FlowModel& model, const EstimationConfig& cfg,
                                const Image* initial_image = nullptr, const LatentObserver& observer = {});

EstimationResult estimate_parametric(const Image& y, const Image& x_ref, int scale, const EstimationConfig& cfg);

/// Nearest-neighbor upsampling by an integer factor.
Image upsample_nearest(const Image& y, int scale);

}  // namespace fkp::estimate

#include "fkp/kernelgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fkp/error.hpp"

namespace fkp::kernelgen {

void require_supported_scale(int scale) {
  if (scale < 2 || scale > 4) throw ConfigError("unsupported scale factor " + std::to_string(scale) + " (expected 2, 3 or 4)");
}

std::size_t kernel_side(int scale) {
  if (scale < 1) throw ConfigError("scale factor must be positive");
  return static_cast<std::size_t>(4 * scale + 3);
}

SigmaRange sigma_range(int scale) { return {0.175 * scale, 2.5 * scale}; }

CenterOffset shift_for_scale(int scale) {
  if (scale < 1) throw ConfigError("scale factor must be positive");
  const double shift = -0.5 * (scale - 1);
  return {shift, shift};
}

GaussianKernelParams sample_params(int scale, Rng& rng, bool shifted) {
  require_supported_scale(scale);
  const SigmaRange range = sigma_range(scale);
  GaussianKernelParams p;
  p.sigma1 = rng.uniform(range.lo, range.hi);
  p.sigma2 = rng.uniform(range.lo, range.hi);
  p.angle = rng.uniform(0.0, std::numbers::pi);
  if (shifted) p.center_offset = shift_for_scale(scale);
  return p;
}

void validate(const GaussianKernelParams& params) {
  if (!std::isfinite(params.sigma1) || !std::isfinite(params.sigma2) || params.sigma1 < 1e-6 || params.sigma2 < 1e-6)
    throw ParameterError("gaussian kernel: widths must be finite and at least 1e-6 (singular covariance)");
  if (!std::isfinite(params.angle) || !std::isfinite(params.center_offset.dy) || !std::isfinite(params.center_offset.dx))
    throw ParameterError("gaussian kernel: non-finite angle or offset");
}

void validate(const GaussianKernelParams& params, int scale) {
  validate(params);
  const SigmaRange range = sigma_range(scale);
  const auto in_range = [&](double s) { return s >= range.lo && s <= range.hi; };
  if (!in_range(params.sigma1) || !in_range(params.sigma2))
    throw ParameterError("gaussian kernel: widths outside [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
  if (params.angle < 0.0 || params.angle >= std::numbers::pi) throw ParameterError("gaussian kernel: angle outside [0, pi)");
}

namespace {

// Coordinates of grid point (row, col) along the two principal axes.
struct Principal {
  double u;
  double v;
};

Principal principal(const GaussianKernelParams& p, std::size_t side, std::size_t row, std::size_t col) {
  const double mid = static_cast<double>(side / 2);
  const double d0 = static_cast<double>(row) - (mid + p.center_offset.dy);
  const double d1 = static_cast<double>(col) - (mid + p.center_offset.dx);
  const double c = std::cos(p.angle), s = std::sin(p.angle);
  return {c * d0 + s * d1, -s * d0 + c * d1};
}

void check_side(std::size_t side) {
  if (side == 0 || side % 2 == 0) throw InputError("kernel side must be odd, got " + std::to_string(side));
}

}  // namespace

Kernel render_kernel(const GaussianKernelParams& params, std::size_t side) {
  validate(params);
  check_side(side);
  const double inv1 = 1.0 / (params.sigma1 * params.sigma1);
  const double inv2 = 1.0 / (params.sigma2 * params.sigma2);
  std::vector<double> w(side * side);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const auto [u, v] = principal(params, side, i, j);
      w[i * side + j] = std::exp(-0.5 * (u * u * inv1 + v * v * inv2));
    }
  return Kernel(side, std::move(w)).normalized();
}

KernelJacobian render_kernel_jacobian(const GaussianKernelParams& params, std::size_t side) {
  validate(params);
  check_side(side);
  const double s1 = params.sigma1, s2 = params.sigma2;
  const double inv1 = 1.0 / (s1 * s1), inv2 = 1.0 / (s2 * s2);
  const std::size_t n = side * side;
  std::vector<double> w(n);
  std::array<std::vector<double>, 3> dw{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  double total = 0.0;
  std::array<double, 3> dtotal{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const auto [u, v] = principal(params, side, i, j);
      const std::size_t idx = i * side + j;
      const double wi = std::exp(-0.5 * (u * u * inv1 + v * v * inv2));
      w[idx] = wi;
      // dw/dp = -w/2 * dq/dp with q = u^2/s1^2 + v^2/s2^2
      dw[0][idx] = wi * u * u / (s1 * s1 * s1);
      dw[1][idx] = wi * v * v / (s2 * s2 * s2);
      dw[2][idx] = -wi * u * v * (inv1 - inv2);
      total += wi;
      for (int p = 0; p < 3; ++p) dtotal[p] += dw[p][idx];
    }
  KernelJacobian out;
  for (double& x : w) x /= total;
  for (int p = 0; p < 3; ++p)
    for (std::size_t idx = 0; idx < n; ++idx) dw[p][idx] = (dw[p][idx] - w[idx] * dtotal[p]) / total;
  out.kernel = Kernel(side, std::move(w));
  out.partials = std::move(dw);
  return out;
}

Kernel perturb_kernel(const Kernel& k, double amplitude, Rng& rng) {
  if (!(amplitude >= 0.0 && amplitude <= 1.0)) throw ContractError("perturb_kernel: amplitude must lie in [0, 1]");
  if (amplitude == 0.0) return k;
  Kernel out = k;
  for (double& w : out.weights()) {
    const double u = rng.uniform(-amplitude, amplitude);
    w = std::max(0.0, w * (1.0 + u));
  }
  if (!(out.sum() > 0.0)) throw DegenerateError("perturb_kernel: all weights vanished after clamping");
  return out.normalized();
}

}  // namespace fkp::kernelgen

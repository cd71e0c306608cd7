#include "fkp/degrade.hpp"

#include <cmath>
#include <string>

#include "fkp/error.hpp"
#include "fkp/parallel/kernels.hpp"

namespace fkp::degrade {

namespace {

par::BlurGeometry geometry(std::size_t height, std::size_t width, std::size_t side, int scale) {
  if (scale < 1) throw ConfigError("degrade: scale must be at least 1, got " + std::to_string(scale));
  if (height < side || width < side)
    throw InputError("degrade: image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the " + std::to_string(side) + "x" + std::to_string(side) + " kernel");
  return {height, width, side, static_cast<std::size_t>(scale)};
}

std::size_t kernel_side_for(std::size_t count) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(count))));
  if (side * side != count || side % 2 == 0)
    throw DimensionError("degrade: kernel of " + std::to_string(count) + " values is not an odd square grid");
  return side;
}

}  // namespace

std::size_t output_extent(std::size_t extent, int scale) {
  return (extent + static_cast<std::size_t>(scale) - 1) / static_cast<std::size_t>(scale);
}

Image blur_downsample(const Image& x, const Kernel& k, int scale) {
  const auto geo = geometry(x.height(), x.width(), k.side(), scale);
  Image y(geo.out_height(), geo.out_width(), x.channels());
  for (std::size_t c = 0; c < x.channels(); ++c) par::omp::blur_downsample(x.plane(c), geo, k.weights(), y.plane(c));
  return y;
}

Image degrade(const Image& x, const Kernel& k, const DegradationConfig& cfg) {
  if (!(cfg.noise_level >= 0.0 && cfg.noise_level <= 1.0)) throw ConfigError("degrade: noise level must lie in [0, 1]");
  Image y = blur_downsample(x, k, cfg.scale);
  if (cfg.noise_level == 0.0) return y;
  Rng rng = Rng::stream(cfg.seed, "image-noise");
  return add_image_noise(y, cfg.noise_level, rng);
}

DegradeGradient degrade_grad(const Image& x, const Kernel& k, int scale, const Image& upstream) {
  const auto geo = geometry(x.height(), x.width(), k.side(), scale);
  if (upstream.height() != geo.out_height() || upstream.width() != geo.out_width() || upstream.channels() != x.channels())
    throw ContractError("degrade_grad: upstream gradient shape does not match the degraded image");
  DegradeGradient out{Image(x.height(), x.width(), x.channels()), Kernel(k.side(), std::vector<double>(k.size(), 0.0))};
  for (std::size_t c = 0; c < x.channels(); ++c) {
    par::omp::blur_downsample_grad_image(upstream.plane(c), geo, k.weights(), out.image.plane(c));
    par::omp::blur_downsample_grad_kernel(x.plane(c), geo, upstream.plane(c), out.kernel.weights());
  }
  return out;
}

Image add_image_noise(const Image& x, double level, Rng& rng) {
  if (!(level >= 0.0 && level <= 1.0)) throw ContractError("add_image_noise: level must lie in [0, 1]");
  Image y = x;
  if (level == 0.0) return y;
  for (double& v : y.pixels()) v += level * rng.normal();
  return y;
}

diff::Var blur_downsample(diff::Var image, diff::Var kernel, int scale) {
  const diff::Tensor& xv = image.value();
  const diff::Tensor& kv = kernel.value();
  if (xv.rank() != 3) throw DimensionError("blur_downsample: image must have shape [C, H, W], got " + diff::to_string(xv.shape()));
  const std::size_t channels = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const auto geo = geometry(h, w, kernel_side_for(kv.size()), scale);
  const std::size_t plane = h * w, out_plane = geo.out_height() * geo.out_width();
  diff::Tensor out({channels, geo.out_height(), geo.out_width()});
  for (std::size_t c = 0; c < channels; ++c)
    par::omp::blur_downsample(xv.data().subspan(c * plane, plane), geo, kv.data(), out.data().subspan(c * out_plane, out_plane));
  const diff::Tensor* xp = &xv;
  const diff::Tensor* kp = &kv;
  return image.tape().custom(
      "blur_downsample", {image, kernel}, std::move(out),
      [xp, kp, geo, channels, plane, out_plane](const diff::Tensor&, const diff::Tensor& g,
                                                std::span<diff::Tensor* const> grads) {
        if (grads[0]) {
          std::vector<double> tmp(plane);
          for (std::size_t c = 0; c < channels; ++c) {
            par::omp::blur_downsample_grad_image(g.data().subspan(c * out_plane, out_plane), geo, kp->data(), tmp);
            auto dst = grads[0]->data().subspan(c * plane, plane);
            for (std::size_t i = 0; i < plane; ++i) dst[i] += tmp[i];
          }
        }
        if (grads[1])
          for (std::size_t c = 0; c < channels; ++c)
            par::omp::blur_downsample_grad_kernel(xp->data().subspan(c * plane, plane), geo,
                                                  g.data().subspan(c * out_plane, out_plane), grads[1]->data());
      });
}

}  // namespace fkp::degrade

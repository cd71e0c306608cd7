#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "fkp/degrade.hpp"
#include "fkp/error.hpp"
#include "fkp/estimate.hpp"
#include "fkp/kernelgen.hpp"
#include "models.hpp"

using namespace fkp;

namespace {

// Random frozen flow whose outermost normalization maps unit latents to
// kernel-scale values, so sampled kernels look like blurs.
flow::FlowModel kernel_like_model(std::uint64_t seed) {
  flow::FlowModel m = testutil::random_model(121, 3, seed, 0.1);
  auto& first = m.blocks().front();
  for (double& v : first.running_mean) v = 1.0 / 121.0;
  for (double& v : first.running_var) v = 1e-4;
  return m;
}

Image camera_crop(std::size_t top, std::size_t left, std::size_t size) {
  static const Image camera = read_netpbm(std::filesystem::path(FKP_TEST_DATA_DIR) / "camera256.pgm");
  return camera.crop(top, left, size, size);
}

double norm(std::span<const double> z) { return std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0)); }

}  // namespace

TEST(Latent, ProjectSphereAndInit) {
  const std::vector<double> z{3.0, 4.0};
  const auto p = estimate::project_sphere(z);
  EXPECT_NEAR(norm(p), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(p[0] / p[1], 0.75, 1e-15);
  EXPECT_THROW(estimate::project_sphere(std::vector<double>(3, 0.0)), DegenerateError);

  const flow::FlowModel m = kernel_like_model(1);
  Rng a(2), b(2);
  const auto z1 = estimate::init_latent(m, a);
  EXPECT_EQ(z1, estimate::init_latent(m, b));
  EXPECT_NEAR(norm(z1), 11.0, 1e-12);
}

TEST(Latent, InitRequiresFrozenModel) {
  flow::FlowConfig c;
  Rng rng(0);
  EXPECT_THROW(estimate::init_latent(flow::FlowModel::create(c), rng), ContractError);
}

TEST(Objective, TotalVariationAndFidelityByHand) {
  Image x(2, 3, 1);
  const double v[] = {0.0, 0.5, 0.5, 1.0, 1.0, 0.0};
  std::copy(std::begin(v), std::end(v), x.pixels().begin());
  // horizontal |diffs| 0.5 0 0 1, vertical 1 0.5 0.5, over 6 pixels
  EXPECT_NEAR(estimate::total_variation(x), 3.5 / 6.0, 1e-15);

  const Image hr(24, 24, 1, 0.25);
  EXPECT_NEAR(estimate::data_fidelity(Image(12, 12, 1, 0.5), hr, Kernel::delta(11), 2), 0.0625, 1e-15);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const flow::FlowModel m = kernel_like_model(3);
  const Image x = camera_crop(100, 100, 16);
  const Kernel k = kernelgen::render_kernel({1.2, 0.8, 0.5, kernelgen::shift_for_scale(2)}, 11);
  const Image y = degrade::blur_downsample(x, k, 2);
  Rng rng(4);
  const auto z = estimate::init_latent(m, rng);
  const auto obj = estimate::reference_objective(y, x, m, z);
  const double h = 1e-6;
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = rng.below(z.size());
    auto up = z, down = z;
    up[i] += h;
    down[i] -= h;
    const double numeric =
        (estimate::reference_objective(y, x, m, up).loss - estimate::reference_objective(y, x, m, down).loss) / (2 * h);
    EXPECT_NEAR(obj.gradient[i], numeric, 1e-4 * std::max({1e-6, std::abs(numeric), std::abs(obj.gradient[i])}));
  }
}

TEST(Reference, LatentStaysOnSphereEveryIteration) {
  const flow::FlowModel m = kernel_like_model(5);
  const Image x = camera_crop(60, 80, 32);
  const Image y = degrade::blur_downsample(x, kernelgen::render_kernel({1.5, 1.5, 0.0, {-0.5, -0.5}}, 11), 2);
  estimate::EstimationConfig cfg;
  cfg.iterations = 40;
  std::size_t calls = 0;
  const auto r = estimate::estimate_reference(y, x, m, cfg, [&](std::size_t it, std::span<const double> z) {
    EXPECT_EQ(it, calls++);
    EXPECT_NEAR(norm(z), 11.0, 1e-9);
  });
  EXPECT_EQ(calls, 40u);
  EXPECT_EQ(r.loss_trace.size(), 40u);
  EXPECT_NEAR(norm(r.latent), 11.0, 1e-9);
  EXPECT_NEAR(r.kernel.sum(), 1.0, 1e-9);
}

TEST(Reference, BestIterateIsRunningMinimumAndRunsAreDeterministic) {
  const flow::FlowModel m = kernel_like_model(6);
  const Image x = camera_crop(20, 30, 32);
  const Image y = degrade::blur_downsample(x, kernelgen::render_kernel({2.0, 1.0, 0.7, {-0.5, -0.5}}, 11), 2);
  estimate::EstimationConfig cfg;
  cfg.iterations = 60;
  cfg.seed = 9;
  const auto r = estimate::estimate_reference(y, x, m, cfg);
  const double min = *std::min_element(r.loss_trace.begin(), r.loss_trace.end());
  EXPECT_EQ(r.best_loss, min);
  EXPECT_EQ(r.loss_trace[r.best_iteration], min);
  EXPECT_LE(r.best_loss, r.loss_trace.front());
  // the recorded loss belongs to the raw inverse-map kernel at the best latent
  const Kernel raw = flow::flow_inverse(m, r.latent);
  EXPECT_NEAR(estimate::data_fidelity(y, x, raw, 2), r.best_loss, 1e-12 * (1.0 + r.best_loss));

  const auto again = estimate::estimate_reference(y, x, m, cfg);
  EXPECT_EQ(again.loss_trace, r.loss_trace);
  EXPECT_EQ(again.kernel, r.kernel);
}

TEST(Reference, ConfigAndInputErrors) {
  const flow::FlowModel m = kernel_like_model(7);
  const Image x = camera_crop(0, 0, 32);
  const Image y = degrade::blur_downsample(x, Kernel::delta(11), 2);
  estimate::EstimationConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(estimate::estimate_reference(y, x, m, cfg), ContractError);
  cfg.iterations = 5;
  cfg.latent_lr = -1.0;
  EXPECT_THROW(estimate::estimate_reference(y, x, m, cfg), ConfigError);
  cfg.latent_lr = 0.1;
  // a x3 pair given to a x2 model
  const Image y3 = degrade::blur_downsample(camera_crop(0, 0, 33), Kernel::delta(11), 3);
  EXPECT_THROW(estimate::estimate_reference(y3, camera_crop(0, 0, 33), m, cfg), InputError);
  EXPECT_THROW(estimate::estimate_reference(y, camera_crop(0, 0, 30), m, cfg), InputError);
}

TEST(Joint, FrozenTrueImageWithoutTvReproducesReferenceTrace) {
  const flow::FlowModel m = kernel_like_model(8);
  const Image x = camera_crop(90, 40, 32);
  const Image y = degrade::blur_downsample(x, kernelgen::render_kernel({1.1, 1.9, 2.0, {-0.5, -0.5}}, 11), 2);
  estimate::EstimationConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 3;
  const auto ref = estimate::estimate_reference(y, x, m, cfg);
  cfg.mode = estimate::Mode::joint;
  cfg.tv_weight = 0.0;
  cfg.optimize_image = false;
  const auto joint = estimate::estimate_joint(y, m, cfg, &x);
  ASSERT_EQ(joint.loss_trace.size(), ref.loss_trace.size());
  for (std::size_t i = 0; i < ref.loss_trace.size(); ++i) EXPECT_NEAR(joint.loss_trace[i], ref.loss_trace[i], 1e-10);
  ASSERT_TRUE(joint.image.has_value());
  EXPECT_EQ(*joint.image, x);
}

TEST(Joint, ImageIsUpdatedAndSmallInputsRejected) {
  const flow::FlowModel m = kernel_like_model(9);
  const Image x = camera_crop(50, 50, 32);
  const Image y = degrade::blur_downsample(x, kernelgen::render_kernel({1.5, 1.5, 0.0, {-0.5, -0.5}}, 11), 2);
  estimate::EstimationConfig cfg;
  cfg.mode = estimate::Mode::joint;
  cfg.iterations = 20;
  const auto r = estimate::estimate_joint(y, m, cfg);
  ASSERT_TRUE(r.image.has_value());
  EXPECT_EQ(r.image->height(), 32u);
  EXPECT_LE(r.best_loss, r.loss_trace.front());
  EXPECT_NE(*r.image, estimate::upsample_nearest(y, 2));

  const Image tiny = degrade::blur_downsample(camera_crop(0, 0, 24), Kernel::delta(11), 2);
  EXPECT_THROW(estimate::estimate_joint(tiny, m, cfg), InputError);
}

TEST(Upsample, NearestNeighbor) {
  Image y(2, 2, 1);
  y.pixels()[0] = 0.1;
  y.pixels()[3] = 0.9;
  const Image up = estimate::upsample_nearest(y, 3);
  EXPECT_EQ(up.height(), 6u);
  EXPECT_EQ(up.at(0, 2, 2), 0.1);
  EXPECT_EQ(up.at(0, 5, 3), 0.9);
  EXPECT_EQ(up.at(0, 0, 3), 0.0);
}

TEST(Parametric, RecoversIsotropicWidth) {
  const Image x = camera_crop(64, 64, 96);
  for (double sigma : {0.9, 1.6, 2.4}) {
    const Image y = degrade::blur_downsample(x, kernelgen::render_kernel({sigma, sigma, 0.0, {-0.5, -0.5}}, 11), 2);
    estimate::EstimationConfig cfg;
    const auto r = estimate::estimate_parametric(y, x, 2, cfg);
    ASSERT_TRUE(r.params.has_value());
    EXPECT_NEAR(r.params->sigma1, sigma, 0.05 * sigma);
    EXPECT_NEAR(r.params->sigma2, sigma, 0.05 * sigma);
    EXPECT_TRUE(r.latent.empty());
  }
}

TEST(Parametric, ScaleMismatchRejected) {
  const Image x = camera_crop(0, 0, 48);
  const Image y = degrade::blur_downsample(x, Kernel::delta(11), 2);
  estimate::EstimationConfig cfg;
  EXPECT_THROW(estimate::estimate_parametric(y, x, 3, cfg), InputError);
  EXPECT_THROW(estimate::estimate_parametric(y, x, 5, cfg), ConfigError);
}

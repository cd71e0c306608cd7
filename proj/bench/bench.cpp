// Serial reference vs OpenMP kernels on the shapes the library uses:
// flow layers (batch 100 x 121 x hidden) and blur-downsampling of HR images.
//
//   fkp_bench [repetitions]

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fkp/parallel/kernels.hpp"
#include "fkp/rng.hpp"

using namespace fkp;
namespace serial = fkp::par::serial;
namespace omp = fkp::par::omp;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Best of `reps` wall-clock timings, in milliseconds.
double time_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial_ms, double omp_ms) {
  std::printf("%-34s %10.3f %10.3f %8.2fx\n", name.c_str(), serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::max(1, std::stoi(argv[1])) : 5;
  Rng rng(1);
  std::printf("threads: %d, best of %d\n", par::max_threads(), reps);
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  for (const auto [m, k, n] : {std::array<std::size_t, 3>{100, 61, 15}, {100, 15, 60}, {100, 121, 121}, {1000, 121, 60}}) {
    const auto a = random_values(m * k, rng), b = random_values(k * n, rng), g = random_values(m * n, rng);
    std::vector<double> c(m * n), ct(k * n), cn(m * k);
    const std::string shape = std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n);
    row("matmul " + shape, time_ms(reps, [&] { serial::matmul(a, b, c, m, k, n); }),
        time_ms(reps, [&] { omp::matmul(a, b, c, m, k, n); }));
    row("matmul_tn " + shape, time_ms(reps, [&] { serial::matmul_tn(a, g, ct, m, k, n); }),
        time_ms(reps, [&] { omp::matmul_tn(a, g, ct, m, k, n); }));
    row("matmul_nt " + shape, time_ms(reps, [&] { serial::matmul_nt(g, b, cn, m, k, n); }),
        time_ms(reps, [&] { omp::matmul_nt(g, b, cn, m, k, n); }));
  }

  for (const auto [size, side, stride] : {std::array<std::size_t, 3>{128, 11, 2}, {256, 11, 2}, {384, 15, 3}, {512, 19, 4}}) {
    const par::BlurGeometry geo{size, size, side, stride};
    const auto x = random_values(size * size, rng), k = random_values(side * side, rng);
    const auto g = random_values(geo.out_height() * geo.out_width(), rng);
    std::vector<double> y(g.size()), gx(x.size()), gk(k.size());
    const std::string shape = std::to_string(size) + " k" + std::to_string(side) + " s" + std::to_string(stride);
    row("blur " + shape, time_ms(reps, [&] { serial::blur_downsample(x, geo, k, y); }),
        time_ms(reps, [&] { omp::blur_downsample(x, geo, k, y); }));
    row("blur grad image " + shape, time_ms(reps, [&] { serial::blur_downsample_grad_image(g, geo, k, gx); }),
        time_ms(reps, [&] { omp::blur_downsample_grad_image(g, geo, k, gx); }));
    row("blur grad kernel " + shape, time_ms(reps, [&] { serial::blur_downsample_grad_kernel(x, geo, g, gk); }),
        time_ms(reps, [&] { omp::blur_downsample_grad_kernel(x, geo, g, gk); }));
  }

  for (const auto [size, side] : {std::array<std::size_t, 2>{64, 5}, {256, 11}}) {
    const std::size_t o = size - side + 1;
    const auto x = random_values(size * size, rng), k = random_values(side * side, rng), g = random_values(o * o, rng);
    std::vector<double> y(o * o), gx(x.size()), gk(k.size());
    const std::string shape = std::to_string(size) + " k" + std::to_string(side);
    row("correlate " + shape, time_ms(reps, [&] { serial::correlate_valid(x, size, size, k, side, side, y); }),
        time_ms(reps, [&] { omp::correlate_valid(x, size, size, k, side, side, y); }));
    row("correlate grad input " + shape,
        time_ms(reps, [&] { serial::correlate_valid_grad_input(g, size, size, k, side, side, gx); }),
        time_ms(reps, [&] { omp::correlate_valid_grad_input(g, size, size, k, side, side, gx); }));
    row("correlate grad kernel " + shape,
        time_ms(reps, [&] { serial::correlate_valid_grad_kernel(x, size, size, g, side, side, gk); }),
        time_ms(reps, [&] { omp::correlate_valid_grad_kernel(x, size, size, g, side, side, gk); }));
  }
  return 0;
}

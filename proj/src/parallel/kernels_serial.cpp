#include <algorithm>

#include "fkp/parallel/kernels.hpp"

namespace fkp::par::serial {

namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t extent) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(extent) - 1));
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
}

void matmul_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[p * n + j] += a[i * k + p] * g[i * n + j];
}

void matmul_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * k + p] += g[i * n + j] * b[p * n + j];
}

void correlate_valid(std::span<const double> x, std::size_t h, std::size_t w,
                     std::span<const double> k, std::size_t kh, std::size_t kw,
                     std::span<double> out) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) out[i * ow + j] += x[(i + a) * w + j + b] * k[a * kw + b];
}

void correlate_valid_grad_input(std::span<const double> g, std::size_t h, std::size_t w,
                                std::span<const double> k, std::size_t kh, std::size_t kw,
                                std::span<double> gx) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) gx[(i + a) * w + j + b] += g[i * ow + j] * k[a * kw + b];
}

void correlate_valid_grad_kernel(std::span<const double> x, std::size_t h, std::size_t w,
                                 std::span<const double> g, std::size_t kh, std::size_t kw,
                                 std::span<double> gk) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::fill(gk.begin(), gk.end(), 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) gk[a * kw + b] += g[i * ow + j] * x[(i + a) * w + j + b];
}

void blur_downsample(std::span<const double> x, const BlurGeometry& geo, std::span<const double> k,
                     std::span<double> out) {
  const auto r = static_cast<std::ptrdiff_t>(geo.side / 2);
  const auto s = static_cast<std::ptrdiff_t>(geo.stride);
  for (std::size_t i = 0; i < geo.out_height(); ++i)
    for (std::size_t j = 0; j < geo.out_width(); ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < geo.side; ++a)
        for (std::size_t b = 0; b < geo.side; ++b) {
          const std::size_t row = clamp_index(s * static_cast<std::ptrdiff_t>(i) + r - static_cast<std::ptrdiff_t>(a), geo.height);
          const std::size_t col = clamp_index(s * static_cast<std::ptrdiff_t>(j) + r - static_cast<std::ptrdiff_t>(b), geo.width);
          acc += k[a * geo.side + b] * x[row * geo.width + col];
        }
      out[i * geo.out_width() + j] = acc;
    }
}

void blur_downsample_grad_image(std::span<const double> g, const BlurGeometry& geo,
                                std::span<const double> k, std::span<double> gx) {
  const auto r = static_cast<std::ptrdiff_t>(geo.side / 2);
  const auto s = static_cast<std::ptrdiff_t>(geo.stride);
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t i = 0; i < geo.out_height(); ++i)
    for (std::size_t j = 0; j < geo.out_width(); ++j) {
      const double up = g[i * geo.out_width() + j];
      for (std::size_t a = 0; a < geo.side; ++a)
        for (std::size_t b = 0; b < geo.side; ++b) {
          const std::size_t row = clamp_index(s * static_cast<std::ptrdiff_t>(i) + r - static_cast<std::ptrdiff_t>(a), geo.height);
          const std::size_t col = clamp_index(s * static_cast<std::ptrdiff_t>(j) + r - static_cast<std::ptrdiff_t>(b), geo.width);
          gx[row * geo.width + col] += up * k[a * geo.side + b];
        }
    }
}

void blur_downsample_grad_kernel(std::span<const double> x, const BlurGeometry& geo,
                                 std::span<const double> g, std::span<double> gk) {
  const auto r = static_cast<std::ptrdiff_t>(geo.side / 2);
  const auto s = static_cast<std::ptrdiff_t>(geo.stride);
  for (std::size_t i = 0; i < geo.out_height(); ++i)
    for (std::size_t j = 0; j < geo.out_width(); ++j) {
      const double up = g[i * geo.out_width() + j];
      for (std::size_t a = 0; a < geo.side; ++a)
        for (std::size_t b = 0; b < geo.side; ++b) {
          const std::size_t row = clamp_index(s * static_cast<std::ptrdiff_t>(i) + r - static_cast<std::ptrdiff_t>(a), geo.height);
          const std::size_t col = clamp_index(s * static_cast<std::ptrdiff_t>(j) + r - static_cast<std::ptrdiff_t>(b), geo.width);
          gk[a * geo.side + b] += up * x[row * geo.width + col];
        }
    }
}

}  // namespace fkp::par::serial

#pragma once

// Dense inner loops shared by the autodiff engine and the degradation
// operator. Each routine exists twice: `serial` is the plain nested-loop
// reference kept for tests and benchmarks, `omp` is the OpenMP version used
// everywhere else. Every output element of an `omp` routine is reduced by a
// single thread in a fixed order, so results do not depend on thread count.

#include <cstddef>
#include <span>

namespace fkp::par {

/// Geometry of blur-then-subsample: an H x W plane, odd `side` x `side`
/// kernel, replicate padding of side/2, rows/cols kept at 0, s, 2s, ...
struct BlurGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t side = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (height + stride - 1) / stride; }
  std::size_t out_width() const { return (width + stride - 1) / stride; }
};

#define FKP_PAR_DECLARE_KERNELS                                                                   \
  /* c[m x n] = a[m x k] * b[k x n] */                                                            \
  void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,          \
              std::size_t m, std::size_t k, std::size_t n);                                       \
  /* c[k x n] = a^T * g with a[m x k], g[m x n] */                                                \
  void matmul_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,       \
                 std::size_t m, std::size_t k, std::size_t n);                                    \
  /* c[m x k] = g * b^T with g[m x n], b[k x n] */                                                \
  void matmul_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,       \
                 std::size_t m, std::size_t k, std::size_t n);                                    \
  /* out[(h-kh+1) x (w-kw+1)] = valid cross-correlation of x with k */                           \
  void correlate_valid(std::span<const double> x, std::size_t h, std::size_t w,                   \
                       std::span<const double> k, std::size_t kh, std::size_t kw,                 \
                       std::span<double> out);                                                    \
  /* gx[h x w] = full convolution of upstream g with k (adjoint of correlate_valid in x) */       \
  void correlate_valid_grad_input(std::span<const double> g, std::size_t h, std::size_t w,        \
                                  std::span<const double> k, std::size_t kh, std::size_t kw,      \
                                  std::span<double> gx);                                          \
  /* gk[kh x kw] = adjoint of correlate_valid in k */                                             \
  void correlate_valid_grad_kernel(std::span<const double> x, std::size_t h, std::size_t w,       \
                                   std::span<const double> g, std::size_t kh, std::size_t kw,     \
                                   std::span<double> gk);                                         \
  /* out = ((x conv k) with replicate padding) subsampled by stride */                           \
  void blur_downsample(std::span<const double> x, const BlurGeometry& geo,                        \
                       std::span<const double> k, std::span<double> out);                        \
  /* gx (overwritten) = adjoint of blur_downsample in x applied to g */                           \
  void blur_downsample_grad_image(std::span<const double> g, const BlurGeometry& geo,             \
                                  std::span<const double> k, std::span<double> gx);               \
  /* gk (accumulated into) += adjoint of blur_downsample in k applied to g */                     \
  void blur_downsample_grad_kernel(std::span<const double> x, const BlurGeometry& geo,            \
                                   std::span<const double> g, std::span<double> gk);

namespace serial {
FKP_PAR_DECLARE_KERNELS
}  // namespace serial

namespace omp {
FKP_PAR_DECLARE_KERNELS
}  // namespace omp

#undef FKP_PAR_DECLARE_KERNELS

/// Number of worker threads OpenMP will use (1 when built without OpenMP).
int max_threads();

/// Sets the thread count for later parallel regions (no-op without OpenMP).
void set_max_threads(int n);

}  // namespace fkp::par

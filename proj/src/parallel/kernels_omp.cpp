#include <algorithm>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fkp/parallel/kernels.hpp"

namespace fkp::par {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace omp {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = std::ptrdiff_t;

Index signed_size(std::size_t n) { return static_cast<Index>(n); }

// clamped source index for every (output position, kernel tap) pair
std::vector<std::size_t> tap_table(std::size_t out_extent, const BlurGeometry& geo, std::size_t extent) {
  const Index r = signed_size(geo.side / 2);
  const Index s = signed_size(geo.stride);
  std::vector<std::size_t> table(out_extent * geo.side);
  for (std::size_t i = 0; i < out_extent; ++i)
    for (std::size_t a = 0; a < geo.side; ++a) {
      const Index src = s * signed_size(i) + r - signed_size(a);
      table[i * geo.side + a] = static_cast<std::size_t>(std::clamp<Index>(src, 0, signed_size(extent) - 1));
    }
  return table;
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const Index rows = signed_size(m);
#pragma omp parallel for if (m * k * n > kParallelWork) schedule(static)
  for (Index ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const Index rows = signed_size(k);
#pragma omp parallel for if (m * k * n > kParallelWork) schedule(static)
  for (Index pp = 0; pp < rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* crow = c.data() + p * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

void matmul_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n) {
  const Index rows = signed_size(m);
#pragma omp parallel for if (m * k * n > kParallelWork) schedule(static)
  for (Index ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] = acc;
    }
  }
}

void correlate_valid(std::span<const double> x, std::size_t h, std::size_t w,
                     std::span<const double> k, std::size_t kh, std::size_t kw,
                     std::span<double> out) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
#pragma omp parallel for if (oh * ow * kh * kw > kParallelWork) schedule(static)
  for (Index ii = 0; ii < signed_size(oh); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) acc += x[(i + a) * w + j + b] * k[a * kw + b];
      out[i * ow + j] = acc;
    }
  }
}

void correlate_valid_grad_input(std::span<const double> g, std::size_t h, std::size_t w,
                                std::span<const double> k, std::size_t kh, std::size_t kw,
                                std::span<double> gx) {
  const Index oh = signed_size(h - kh + 1), ow = signed_size(w - kw + 1);
#pragma omp parallel for if (h * w * kh * kw > kParallelWork) schedule(static)
  for (Index y = 0; y < signed_size(h); ++y) {
    for (Index x = 0; x < signed_size(w); ++x) {
      double acc = 0.0;
      const Index a_lo = std::max<Index>(0, y - oh + 1), a_hi = std::min<Index>(signed_size(kh) - 1, y);
      const Index b_lo = std::max<Index>(0, x - ow + 1), b_hi = std::min<Index>(signed_size(kw) - 1, x);
      for (Index a = a_lo; a <= a_hi; ++a)
        for (Index b = b_lo; b <= b_hi; ++b)
          acc += g[static_cast<std::size_t>((y - a) * ow + (x - b))] * k[static_cast<std::size_t>(a) * kw + static_cast<std::size_t>(b)];
      gx[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = acc;
    }
  }
}

void correlate_valid_grad_kernel(std::span<const double> x, std::size_t h, std::size_t w,
                                 std::span<const double> g, std::size_t kh, std::size_t kw,
                                 std::span<double> gk) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
#pragma omp parallel for if (oh * ow * kh * kw > kParallelWork) schedule(static)
  for (Index aa = 0; aa < signed_size(kh); ++aa) {
    const auto a = static_cast<std::size_t>(aa);
    for (std::size_t b = 0; b < kw; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) acc += g[i * ow + j] * x[(i + a) * w + j + b];
      gk[a * kw + b] = acc;
    }
  }
}

void blur_downsample(std::span<const double> x, const BlurGeometry& geo, std::span<const double> k,
                     std::span<double> out) {
  const std::size_t oh = geo.out_height(), ow = geo.out_width(), side = geo.side;
  const auto rows = tap_table(oh, geo, geo.height);
  const auto cols = tap_table(ow, geo, geo.width);
#pragma omp parallel for if (oh * ow * side * side > kParallelWork) schedule(static)
  for (Index ii = 0; ii < signed_size(oh); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < side; ++a) {
        const double* xrow = x.data() + rows[i * side + a] * geo.width;
        const std::size_t* ctab = cols.data() + j * side;
        const double* krow = k.data() + a * side;
        for (std::size_t b = 0; b < side; ++b) acc += krow[b] * xrow[ctab[b]];
      }
      out[i * ow + j] = acc;
    }
  }
}

void blur_downsample_grad_image(std::span<const double> g, const BlurGeometry& geo,
                                std::span<const double> k, std::span<double> gx) {
  // Gather into the padded domain, where every padded pixel receives
  // contributions from a contiguous range of output rows/cols, then fold the
  // padding back onto the border pixels it replicates.
  const Index r = signed_size(geo.side / 2);
  const Index s = signed_size(geo.stride);
  const Index side = signed_size(geo.side);
  const Index oh = signed_size(geo.out_height()), ow = signed_size(geo.out_width());
  const Index row_lo = r - (side - 1), row_hi = s * (oh - 1) + r;
  const Index col_lo = r - (side - 1), col_hi = s * (ow - 1) + r;
  const Index ph = row_hi - row_lo + 1, pw = col_hi - col_lo + 1;
  std::vector<double> padded(static_cast<std::size_t>(ph * pw), 0.0);

  const auto floor_div = [](Index num, Index den) { return num >= 0 ? num / den : -((-num + den - 1) / den); };
  const auto ceil_div = [&](Index num, Index den) { return -floor_div(-num, den); };

#pragma omp parallel for if (static_cast<std::size_t>(oh * ow * side * side) > kParallelWork) schedule(static)
  for (Index pr = 0; pr < ph; ++pr) {
    const Index q = row_lo + pr;
    const Index i_lo = std::max<Index>(0, ceil_div(q - r, s));
    const Index i_hi = std::min<Index>(oh - 1, floor_div(q - r + side - 1, s));
    for (Index pc = 0; pc < pw; ++pc) {
      const Index p = col_lo + pc;
      const Index j_lo = std::max<Index>(0, ceil_div(p - r, s));
      const Index j_hi = std::min<Index>(ow - 1, floor_div(p - r + side - 1, s));
      double acc = 0.0;
      for (Index i = i_lo; i <= i_hi; ++i) {
        const Index a = s * i + r - q;
        for (Index j = j_lo; j <= j_hi; ++j) {
          const Index b = s * j + r - p;
          acc += g[static_cast<std::size_t>(i * ow + j)] * k[static_cast<std::size_t>(a * side + b)];
        }
      }
      padded[static_cast<std::size_t>(pr * pw + pc)] = acc;
    }
  }

  std::fill(gx.begin(), gx.end(), 0.0);
  const Index h = signed_size(geo.height), w = signed_size(geo.width);
  for (Index pr = 0; pr < ph; ++pr) {
    const Index row = std::clamp<Index>(row_lo + pr, 0, h - 1);
    for (Index pc = 0; pc < pw; ++pc) {
      const Index col = std::clamp<Index>(col_lo + pc, 0, w - 1);
      gx[static_cast<std::size_t>(row * w + col)] += padded[static_cast<std::size_t>(pr * pw + pc)];
    }
  }
}

void blur_downsample_grad_kernel(std::span<const double> x, const BlurGeometry& geo,
                                 std::span<const double> g, std::span<double> gk) {
  const std::size_t oh = geo.out_height(), ow = geo.out_width(), side = geo.side;
  const auto rows = tap_table(oh, geo, geo.height);
  const auto cols = tap_table(ow, geo, geo.width);
#pragma omp parallel for if (oh * ow * side * side > kParallelWork) schedule(static)
  for (Index aa = 0; aa < signed_size(side); ++aa) {
    const auto a = static_cast<std::size_t>(aa);
    for (std::size_t b = 0; b < side; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oh; ++i) {
        const double* xrow = x.data() + rows[i * side + a] * geo.width;
        const double* grow = g.data() + i * ow;
        for (std::size_t j = 0; j < ow; ++j) acc += grow[j] * xrow[cols[j * side + b]];
      }
      gk[a * side + b] += acc;
    }
  }
}

}  // namespace omp
}  // namespace fkp::par

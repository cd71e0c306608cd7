#pragma once

// Direct, unoptimized reference computations used to check the library.
// Nothing here calls into the code under test beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "fkp/image.hpp"
#include "fkp/kernel.hpp"

namespace fkp::oracle {

// y[c][i][j] = sum_{a,b} k[a][b] * x[c][clamp(i*s + r - a)][clamp(j*s + r - b)], r = side / 2
inline Image blur_downsample(const Image& x, const Kernel& k, int s) {
  const long h = static_cast<long>(x.height()), w = static_cast<long>(x.width());
  const long side = static_cast<long>(k.side()), r = side / 2;
  const std::size_t oh = (x.height() + s - 1) / s, ow = (x.width() + s - 1) / s;
  Image y(oh, ow, x.channels());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (long a = 0; a < side; ++a)
          for (long b = 0; b < side; ++b) {
            const long row = std::clamp(static_cast<long>(i) * s + r - a, 0L, h - 1);
            const long col = std::clamp(static_cast<long>(j) * s + r - b, 0L, w - 1);
            acc += k.at(a, b) * x.at(c, row, col);
          }
        y.at(c, i, j) = acc;
      }
  return y;
}

// log|det A| by Gaussian elimination with partial pivoting; A is n x n row-major.
inline double log_abs_det(std::vector<double> a, std::size_t n) {
  double result = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (a[pivot * n + col] == 0.0) return -std::numeric_limits<double>::infinity();
    if (pivot != col)
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
    const double d = a[col * n + col];
    result += std::log(std::abs(d));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / d;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
    }
  }
  return result;
}

// Mean SSIM over every fully contained 11x11 window, evaluating each window
// directly with a normalized 2-D Gaussian of sigma 1.5. Single-channel inputs.
inline double ssim(const Image& a, const Image& b) {
  constexpr int win = 11, half = 5;
  constexpr double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double g[win][win];
  double total = 0.0;
  for (int u = 0; u < win; ++u)
    for (int v = 0; v < win; ++v) {
      g[u][v] = std::exp(-((u - half) * (u - half) + (v - half) * (v - half)) / (2 * sigma * sigma));
      total += g[u][v];
    }
  for (auto& row : g)
    for (double& x : row) x /= total;

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + win <= a.height(); ++i)
    for (std::size_t j = 0; j + win <= a.width(); ++j) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
          const double x = a.at(0, i + u, j + v), y = b.at(0, i + u, j + v), wt = g[u][v];
          ma += wt * x;
          mb += wt * y;
          saa += wt * x * x;
          sbb += wt * y * y;
          sab += wt * x * y;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

// Pearson correlation between a kernel and the Gaussian with the same first
// and second moments, evaluated on the same grid.
inline double moment_matched_correlation(const Kernel& k) {
  const std::size_t n = k.side();
  double s = 0, my = 0, mx = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      s += k.at(i, j);
      my += i * k.at(i, j);
      mx += j * k.at(i, j);
    }
  my /= s;
  mx /= s;
  double syy = 0, syx = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double w = k.at(i, j) / s, dy = i - my, dx = j - mx;
      syy += w * dy * dy;
      syx += w * dy * dx;
      sxx += w * dx * dx;
    }
  const double det = syy * sxx - syx * syx;
  if (!(det > 0.0)) return 0.0;
  std::vector<double> g(n * n), v(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dy = i - my, dx = j - mx;
      g[i * n + j] = std::exp(-0.5 * (sxx * dy * dy - 2 * syx * dy * dx + syy * dx * dx) / det);
      v[i * n + j] = k.at(i, j);
    }
  double mg = 0, mv = 0;
  for (std::size_t t = 0; t < n * n; ++t) {
    mg += g[t];
    mv += v[t];
  }
  mg /= static_cast<double>(n * n);
  mv /= static_cast<double>(n * n);
  double gv = 0, gg = 0, vv = 0;
  for (std::size_t t = 0; t < n * n; ++t) {
    gv += (g[t] - mg) * (v[t] - mv);
    gg += (g[t] - mg) * (g[t] - mg);
    vv += (v[t] - mv) * (v[t] - mv);
  }
  return gv / std::sqrt(gg * vv);
}

// Mean NLL of `rows` (each of length d) under the maximum-likelihood Gaussian
// fitted to the same rows. Returns -inf when the sample covariance is not
// positive definite (the fitted density is degenerate and its likelihood
// unbounded).
inline double full_covariance_gaussian_nll(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) mean[i] += r[i];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) cov[j * d + i] = cov[i * d + j] /= static_cast<double>(n);

  // Cholesky; a non-positive pivot relative to the diagonal scale means the
  // matrix is singular to working precision.
  double scale = 0.0;
  for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, cov[i * d + i]);
  std::vector<double> l(d * d, 0.0);
  double half_logdet = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diag = cov[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * d + k] * l[j * d + k];
    if (!(diag > 1e-14 * scale)) return -std::numeric_limits<double>::infinity();
    l[j * d + j] = std::sqrt(diag);
    half_logdet += std::log(l[j * d + j]);
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = cov[i * d + j];
      for (std::size_t k = 0; k < j; ++k) v -= l[i * d + k] * l[j * d + k];
      l[i * d + j] = v / l[j * d + j];
    }
  }
  // At the MLE the mean Mahalanobis term equals d.
  return 0.5 * static_cast<double>(d) * (1.0 + std::log(2.0 * std::numbers::pi)) + half_logdet;
}

// 10 log10(1 / MSE) over two equally sized grids.
inline double psnr(std::span<const double> a, std::span<const double> b) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    acc += d * d;
  }
  if (acc == 0.0L) return std::numeric_limits<double>::infinity();
  return static_cast<double>(-10.0L * std::log10(acc / static_cast<long double>(a.size())));
}

// BT.601 luma of one pixel, inputs on [0, 1].
inline double luma(double r, double g, double b) { return (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0; }

// PSNR on luma after dropping `border` pixels from each side.
inline double image_psnr(const Image& a, const Image& b, std::size_t border) {
  std::vector<double> la, lb;
  for (std::size_t i = border; i + border < a.height(); ++i)
    for (std::size_t j = border; j + border < a.width(); ++j) {
      if (a.channels() == 1) {
        la.push_back(a.at(0, i, j));
        lb.push_back(b.at(0, i, j));
      } else {
        la.push_back(luma(a.at(0, i, j), a.at(1, i, j), a.at(2, i, j)));
        lb.push_back(luma(b.at(0, i, j), b.at(1, i, j), b.at(2, i, j)));
      }
    }
  return psnr(la, lb);
}

}  // namespace fkp::oracle

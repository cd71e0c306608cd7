#include "fkp/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "fkp/error.hpp"

namespace fkp::metrics {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double psnr_from_mse(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

void require_same_extents(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels())
    throw InputError(std::string(what) + ": image extents differ");
}

std::vector<double> gaussian_taps() {
  std::vector<double> taps(kWindow);
  const double mid = static_cast<double>(kWindow / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - mid;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Valid separable filtering of an h x w plane with the 1-D taps.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w, const std::vector<double>& taps) {
  const std::size_t n = taps.size();
  const std::size_t oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(h); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += taps[t] * x[i * w + j + t];
      rows[i * ow + j] = acc;
    }
  }
  std::vector<double> out(oh * ow);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(oh); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += taps[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  }
  return out;
}

}  // namespace

double kernel_psnr(const Kernel& estimate, const Kernel& truth) {
  if (estimate.side() != truth.side())
    throw InputError("kernel_psnr: kernel sides differ (" + std::to_string(estimate.side()) + " vs " +
                     std::to_string(truth.side()) + ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = estimate.weights()[i] - truth.weights()[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(truth.size()));
}

Image to_luma(const Image& x) {
  if (x.channels() == 1) return x;
  if (x.channels() != 3) throw InputError("to_luma: expected 1 or 3 channels");
  Image y(x.height(), x.width(), 1);
  const auto r = x.plane(0), g = x.plane(1), b = x.plane(2);
  auto out = y.plane(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i] + 16.0) / 255.0;
  return y;
}

double image_psnr(const Image& a, const Image& b, std::size_t border) {
  require_same_extents(a, b, "image_psnr");
  if (2 * border >= a.height() || 2 * border >= a.width()) throw InputError("image_psnr: border crop exceeds image extents");
  const Image la = to_luma(a), lb = to_luma(b);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = border; i < a.height() - border; ++i)
    for (std::size_t j = border; j < a.width() - border; ++j) {
      const double d = la.at(0, i, j) - lb.at(0, i, j);
      acc += d * d;
      ++count;
    }
  return psnr_from_mse(acc / static_cast<double>(count));
}

double image_ssim(const Image& a, const Image& b) {
  require_same_extents(a, b, "image_ssim");
  if (a.height() < kWindow || a.width() < kWindow) throw InputError("image_ssim: images must be at least 11x11");
  const Image la = to_luma(a), lb = to_luma(b);
  const std::size_t h = a.height(), w = a.width();
  std::vector<double> x(la.pixels().begin(), la.pixels().end());
  std::vector<double> y(lb.pixels().begin(), lb.pixels().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto taps = gaussian_taps();
  const auto mx = filter_valid(x, h, w, taps), my = filter_valid(y, h, w, taps);
  const auto sxx = filter_valid(xx, h, w, taps), syy = filter_valid(yy, h, w, taps), sxy = filter_valid(xy, h, w, taps);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
  }
  return acc / static_cast<double>(mx.size());
}

namespace {

std::string format_value(const std::optional<double>& v) {
  if (!v) return "na";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::string format_report_line(const MetricReport& report) {
  return report.id + "," + format_value(report.kernel_psnr) + "," + format_value(report.image_psnr) + "," +
         format_value(report.image_ssim);
}

}  // namespace fkp::metrics

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "fkp/image.hpp"
#include "fkp/kernel.hpp"

namespace fkp::metrics {

/// 10 log10(1 / MSE) over all grid entries (peak fixed at 1). +inf for identical kernels.
double kernel_psnr(const Kernel& estimate, const Kernel& truth);

/// BT.601 luma on [0, 1]: (65.481 R + 128.553 G + 24.966 B + 16) / 255.
/// One-channel images pass through unchanged.
Image to_luma(const Image& x);

/// PSNR (peak 1) on luma after cropping `border` pixels from every side.
double image_psnr(const Image& a, const Image& b, std::size_t border);

/// Single-scale SSIM on luma: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, averaged over all window positions inside the image.
double image_ssim(const Image& a, const Image& b);

inline constexpr std::string_view kReportHeader = "id,kernel_psnr,image_psnr,image_ssim";

struct MetricReport {
  std::string id;
  std::optional<double> kernel_psnr;
  std::optional<double> image_psnr;
  std::optional<double> image_ssim;
};

/// One CSV line; missing values print as "na", infinite PSNR as "inf".
std::string format_report_line(const MetricReport& report);

}  // namespace fkp::metrics

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fkp {

/// Planar image with 1 (gray) or 3 (RGB) channels. Values nominally lie in
/// [0, 1]; they are only clamped when written to an 8-bit file.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> pixels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return pixels_.size(); }

  std::span<const double> pixels() const { return pixels_; }
  std::span<double> pixels() { return pixels_; }
  std::span<const double> plane(std::size_t c) const { return std::span(pixels_).subspan(c * plane_size(), plane_size()); }
  std::span<double> plane(std::size_t c) { return std::span(pixels_).subspan(c * plane_size(), plane_size()); }

  double at(std::size_t c, std::size_t row, std::size_t col) const { return pixels_[(c * height_ + row) * width_ + col]; }
  double& at(std::size_t c, std::size_t row, std::size_t col) { return pixels_[(c * height_ + row) * width_ + col]; }

  /// Rows [top, top+h) and columns [left, left+w).
  Image crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const;

  bool operator==(const Image&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> pixels_;
};

/// Binary netpbm: P5 (gray) or P6 (RGB), 8-bit, maxval 255.
Image read_netpbm(const std::filesystem::path& path);
/// Writes P5 for one channel and P6 for three; values are clamped to [0, 1] and rounded.
void write_netpbm(const std::filesystem::path& path, const Image& image);

}  // namespace fkp

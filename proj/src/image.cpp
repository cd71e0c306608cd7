#include "fkp/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "fkp/error.hpp"

namespace fkp {

namespace {

void check_extents(std::size_t h, std::size_t w, std::size_t c) {
  if (h == 0 || w == 0) throw InputError("image: zero extent");
  if (c != 1 && c != 3) throw InputError("image: channels must be 1 or 3, got " + std::to_string(c));
}

}  // namespace

Image::Image(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), pixels_(height * width * channels, fill) {
  check_extents(height, width, channels);
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
  check_extents(height, width, channels);
  if (pixels_.size() != height * width * channels)
    throw DimensionError("image: " + std::to_string(pixels_.size()) + " values for " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
}

Image Image::crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const {
  if (top + h > height_ || left + w > width_) throw InputError("image: crop outside extents");
  Image out(h, w, channels_);
  for (std::size_t c = 0; c < channels_; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(c, i, j) = at(c, top + i, left + j);
  return out;
}

namespace {

// Reads one header integer, skipping whitespace and '#' comments.
long read_header_int(const std::string& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  long value = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000) throw FormatError("netpbm: header value too large", start);
    ++pos;
  }
  if (pos == start) throw FormatError("netpbm: expected integer in header", start);
  return value;
}

}  // namespace

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("netpbm: cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("netpbm: expected P5 or P6 magic", 0);
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const long width = read_header_int(bytes, pos);
  const long height = read_header_int(bytes, pos);
  const long maxval = read_header_int(bytes, pos);
  if (width <= 0 || height <= 0) throw FormatError("netpbm: zero extent", pos);
  if (maxval != 255) throw FormatError("netpbm: only maxval 255 is supported", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("netpbm: missing whitespace after header", pos);
  ++pos;
  const auto h = static_cast<std::size_t>(height), w = static_cast<std::size_t>(width);
  const std::size_t count = h * w * channels;
  if (bytes.size() - pos < count) throw FormatError("netpbm: truncated pixel data", bytes.size());

  Image image(h, w, channels);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto byte = static_cast<unsigned char>(bytes[pos + (i * w + j) * channels + c]);
        image.at(c, i, j) = byte / 255.0;
      }
  return image;
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("netpbm: cannot write " + path.string());
  const std::size_t channels = image.channels();
  out << (channels == 1 ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
  std::string row(image.width() * channels, '\0');
  for (std::size_t i = 0; i < image.height(); ++i) {
    for (std::size_t j = 0; j < image.width(); ++j)
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = std::clamp(image.at(c, i, j), 0.0, 1.0);
        row[j * channels + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace fkp

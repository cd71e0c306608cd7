#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace fkp {

/// Square grid of blur weights with an odd side, stored row-major.
class Kernel {
 public:
  Kernel() = default;
  Kernel(std::size_t side, std::vector<double> weights);

  /// Unit weight at the grid midpoint.
  static Kernel delta(std::size_t side);

  std::size_t side() const { return side_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }
  std::span<double> weights() { return weights_; }

  double at(std::size_t row, std::size_t col) const { return weights_[row * side_ + col]; }
  double& at(std::size_t row, std::size_t col) { return weights_[row * side_ + col]; }

  double sum() const;
  /// Copy scaled to sum 1. Throws DegenerateError when the sum is not positive.
  Kernel normalized() const;

  bool operator==(const Kernel&) const = default;

 private:
  std::size_t side_ = 0;
  std::vector<double> weights_;
};

// FKPK text format: a header line "FKPK <side>" followed by `side` lines of
// `side` whitespace-separated reals.
void write_kernel(std::ostream& out, const Kernel& k);
Kernel read_kernel(std::istream& in);
void save_kernel(const std::filesystem::path& path, const Kernel& k);
Kernel load_kernel(const std::filesystem::path& path);

}  // namespace fkp

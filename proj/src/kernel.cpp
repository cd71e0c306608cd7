#include "fkp/kernel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "fkp/error.hpp"

namespace fkp {

Kernel::Kernel(std::size_t side, std::vector<double> weights) : side_(side), weights_(std::move(weights)) {
  if (side_ == 0 || side_ % 2 == 0) throw InputError("kernel: side must be odd and positive, got " + std::to_string(side_));
  if (weights_.size() != side_ * side_)
    throw DimensionError("kernel: " + std::to_string(weights_.size()) + " weights for side " + std::to_string(side_));
}

Kernel Kernel::delta(std::size_t side) {
  std::vector<double> w(side * side, 0.0);
  Kernel k(side, std::move(w));
  k.at(side / 2, side / 2) = 1.0;
  return k;
}

double Kernel::sum() const {
  double acc = 0.0;
  for (double w : weights_) acc += w;
  return acc;
}

Kernel Kernel::normalized() const {
  const double total = sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateError("kernel: cannot normalize, weight sum is " + std::to_string(total));
  Kernel out = *this;
  for (double& w : out.weights_) w /= total;
  return out;
}

void write_kernel(std::ostream& out, const Kernel& k) {
  out << "FKPK " << k.side() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < k.side(); ++i) {
    for (std::size_t j = 0; j < k.side(); ++j) {
      if (j) out << ' ';
      out << k.at(i, j);
    }
    out << '\n';
  }
}

namespace {

std::size_t offset_of(std::istream& in, std::size_t fallback) {
  in.clear();
  const auto pos = in.tellg();
  return pos < 0 ? fallback : static_cast<std::size_t>(pos);
}

}  // namespace

Kernel read_kernel(std::istream& in) {
  std::string magic;
  if (!(in >> magic) || magic != "FKPK") throw FormatError("kernel: missing FKPK header", 0);
  long long side = 0;
  if (!(in >> side) || side <= 0 || side % 2 == 0)
    throw FormatError("kernel: bad side in header", offset_of(in, 5));
  const auto n = static_cast<std::size_t>(side);
  std::vector<double> weights(n * n);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    std::string token;
    in >> std::ws;
    const std::size_t at = offset_of(in, 0);
    if (!(in >> token)) throw FormatError("kernel: expected " + std::to_string(weights.size()) + " weights, got " + std::to_string(i), at);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || end != token.data() + token.size() || !std::isfinite(value))
      throw FormatError("kernel: bad weight '" + token + "'", at);
    weights[i] = value;
  }
  std::string extra;
  if (in >> extra) throw FormatError("kernel: trailing data after weights", offset_of(in, 0));
  return Kernel(n, std::move(weights));
}

void save_kernel(const std::filesystem::path& path, const Kernel& k) {
  std::ofstream out(path);
  if (!out) throw InputError("kernel: cannot write " + path.string());
  write_kernel(out, k);
}

Kernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("kernel: cannot read " + path.string());
  return read_kernel(in);
}

}  // namespace fkp

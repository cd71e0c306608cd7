#include "fkp/diff/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "fkp/error.hpp"

namespace fkp::diff {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  if (shape_.empty()) throw DimensionError("tensor: empty shape");
  for (auto extent : shape_)
    if (extent == 0) throw DimensionError("tensor: zero extent in shape " + to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw DimensionError("tensor: empty shape");
  for (auto extent : shape_)
    if (extent == 0) throw DimensionError("tensor: zero extent in shape " + to_string(shape_));
  if (element_count(shape_) != data_.size())
    throw DimensionError("tensor: shape " + to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("tensor: item() on shape " + to_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fkp::diff

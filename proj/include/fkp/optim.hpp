#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fkp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter groups.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<std::size_t> group_sizes);

  /// One update; params[i] and grads[i] must match group i in length.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  /// Convenience for a single group.
  void step(std::span<double> params, std::span<const double> grads);

  void reset();
  std::size_t steps() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t step_count_ = 0;
};

}  // namespace fkp

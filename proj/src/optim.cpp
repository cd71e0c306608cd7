#include "fkp/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fkp/error.hpp"

namespace fkp {

Adam::Adam(AdamConfig config, std::vector<std::size_t> group_sizes) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (std::size_t n : group_sizes) {
    first_moment_.emplace_back(n, 0.0);
    second_moment_.emplace_back(n, 0.0);
  }
}

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  if (params.size() != first_moment_.size() || grads.size() != first_moment_.size())
    throw ContractError("adam: parameter group count mismatch");
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto& m = first_moment_[g];
    auto& v = second_moment_[g];
    if (params[g].size() != m.size() || grads[g].size() != m.size()) throw ContractError("adam: parameter group size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double grad = grads[g][i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad * grad;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[g][i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  step(p, g);
}

void Adam::reset() {
  for (auto& m : first_moment_) std::fill(m.begin(), m.end(), 0.0);
  for (auto& v : second_moment_) std::fill(v.begin(), v.end(), 0.0);
  step_count_ = 0;
}

}  // namespace fkp

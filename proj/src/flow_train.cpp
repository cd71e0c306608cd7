#include <cmath>
#include <ostream>
#include <string>

#include "fkp/diff/ops.hpp"
#include "fkp/error.hpp"
#include "fkp/flow.hpp"
#include "fkp/kernelgen.hpp"
#include "fkp/optim.hpp"

namespace fkp::flow {

namespace {

diff::Tensor sample_batch(int scale, std::size_t batch, bool shifted, Rng& rng) {
  const std::size_t side = kernelgen::kernel_side(scale);
  const std::size_t dim = side * side;
  std::vector<double> data;
  data.reserve(batch * dim);
  for (std::size_t i = 0; i < batch; ++i) {
    const Kernel k = kernelgen::render_kernel(kernelgen::sample_params(scale, rng, shifted), side);
    data.insert(data.end(), k.weights().begin(), k.weights().end());
  }
  return diff::Tensor({batch, dim}, std::move(data));
}

}  // namespace

TrainReport train(FlowModel& model, const TrainConfig& config, std::ostream* log, const TrainObserver& observer) {
  kernelgen::require_supported_scale(model.scale());
  if (kernelgen::kernel_side(model.scale()) * kernelgen::kernel_side(model.scale()) != model.dim())
    throw ConfigError("train: model dimension does not match its scale factor");
  if (config.iterations == 0 || config.batch_size == 0) throw ConfigError("train: iterations and batch size must be positive");

  model.unfreeze();
  Rng data = Rng::stream(config.seed, "train-kernels");
  std::vector<std::size_t> sizes;
  for (auto p : model.parameters()) sizes.push_back(p.size());
  Adam adam(AdamConfig{config.learning_rate}, sizes);

  TrainReport report;
  FlowModel last_good = model;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const diff::Tensor batch = sample_batch(model.scale(), config.batch_size, config.shifted_kernels, data);
    last_good = model;
    double loss_value = 0.0;
    try {
      diff::Tape tape;
      FlowGraph graph(tape, model, true);
      const diff::Var loss = nll(graph, tape.constant(batch), &model);
      loss_value = loss.value().item();
      const diff::Gradients grads = tape.backward(loss);

      std::vector<std::span<const double>> grad_spans;
      for (const diff::Var& p : graph.parameters()) {
        const diff::Tensor& g = grads.of(p);
        if (!g.all_finite()) throw NumericError("non-finite parameter gradient");
        grad_spans.push_back(g.data());
      }
      const auto params = model.parameters();
      adam.step(params, grad_spans);
    } catch (const NumericError& e) {
      model = std::move(last_good);
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }

    if (it == 1) report.initial_nll = loss_value;
    report.final_nll = loss_value;
    if (config.log_every > 0 && (it % config.log_every == 0 || it == config.iterations)) {
      report.logged_nll.push_back(loss_value);
      if (log) *log << "iter=" << it << " nll=" << loss_value << '\n';
    }
    if (observer) observer(it, loss_value, model);
  }
  model.freeze();
  return report;
}

}  // namespace fkp::flow

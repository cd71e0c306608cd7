#include "fkp/flow.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fkp/diff/ops.hpp"
#include "fkp/error.hpp"
#include "fkp/kernelgen.hpp"

namespace fkp::flow {

using diff::Tensor;
using diff::Var;

namespace {

std::size_t ceil_half(std::size_t d) { return (d + 1) / 2; }

Linear make_linear(std::size_t in, std::size_t out, Rng* rng) {
  Linear layer{in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)};
  if (rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight) w = rng->uniform(-bound, bound);
    for (double& b : layer.bias) b = rng->uniform(-bound, bound);
  }
  return layer;
}

// in -> hidden -> hidden -> out; the output layer is zero so the net starts at 0
Fcn make_fcn(std::size_t in, std::size_t hidden, std::size_t out, Rng* rng) {
  return Fcn{{make_linear(in, hidden, rng), make_linear(hidden, hidden, rng), make_linear(hidden, out, nullptr)}};
}

FlowBlock make_block(std::size_t dim, std::size_t cond, std::size_t trans, std::size_t hidden, Rng* rng) {
  FlowBlock b;
  b.log_scale.assign(dim, 0.0);
  b.shift.assign(dim, 0.0);
  b.running_mean.assign(dim, 0.0);
  // (1 - eps) + eps == 1 exactly, so a fresh normalization is the identity
  b.running_var.assign(dim, 1.0 - kNormEpsilon);
  b.perm.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) b.perm[i] = i;
  b.scale_net = make_fcn(cond, hidden, trans, rng);
  b.shift_net = make_fcn(cond, hidden, trans, rng);
  b.scale_cap.assign(trans, 1.0);
  return b;
}

void check_fcn(const Fcn& net, std::size_t in, std::size_t out, std::size_t block) {
  std::size_t expected_in = in;
  for (std::size_t l = 0; l < kFcnDepth; ++l) {
    const Linear& layer = net.layers[l];
    if (layer.in != expected_in || layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out)
      throw DimensionError("flow block " + std::to_string(block) + ": FCN layer " + std::to_string(l) + " has inconsistent sizes");
    expected_in = layer.out;
  }
  if (expected_in != out) throw DimensionError("flow block " + std::to_string(block) + ": FCN output size mismatch");
}

Var negate(Var x) { return diff::multiply(x, x.tape().constant(Tensor::scalar(-1.0))); }

Tensor row_tensor(const std::vector<double>& values) { return Tensor({1, values.size()}, values); }

}  // namespace

FlowModel::FlowModel(int scale, std::size_t dim, std::vector<FlowBlock> blocks, bool frozen)
    : scale_(scale), dim_(dim), blocks_(std::move(blocks)), frozen_(frozen) {
  if (dim_ < 2) throw ConfigError("flow: latent dimension must be at least 2");
  if (blocks_.empty()) throw ConfigError("flow: at least one block is required");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const FlowBlock& blk = blocks_[b];
    if (blk.log_scale.size() != dim_ || blk.shift.size() != dim_ || blk.running_mean.size() != dim_ ||
        blk.running_var.size() != dim_ || blk.perm.size() != dim_)
      throw DimensionError("flow block " + std::to_string(b) + ": normalization/permutation size differs from D");
    std::vector<bool> seen(dim_, false);
    for (std::size_t p : blk.perm) {
      if (p >= dim_ || seen[p]) throw ContractError("flow block " + std::to_string(b) + ": perm is not a permutation");
      seen[p] = true;
    }
    for (double v : blk.running_var)
      if (!(v + kNormEpsilon > 0.0)) throw ContractError("flow block " + std::to_string(b) + ": negative running variance");
    check_fcn(blk.scale_net, conditioning_size(b), transformed_size(b), b);
    check_fcn(blk.shift_net, conditioning_size(b), transformed_size(b), b);
    if (blk.scale_cap.size() != transformed_size(b))
      throw DimensionError("flow block " + std::to_string(b) + ": scale cap size mismatch");
  }
}

FlowModel FlowModel::create(const FlowConfig& config) {
  kernelgen::require_supported_scale(config.scale);
  const std::size_t side = config.dim == 0 ? kernelgen::kernel_side(config.scale) : 0;
  const std::size_t dim = config.dim == 0 ? side * side : config.dim;
  const std::size_t hidden = config.hidden == 0 ? static_cast<std::size_t>(5 * (config.scale + 1)) : config.hidden;
  if (config.blocks == 0) throw ConfigError("flow: at least one block is required");
  if (dim < 2) throw ConfigError("flow: latent dimension must be at least 2");

  Rng weights = Rng::stream(config.seed, "flow-weights");
  Rng perms = Rng::stream(config.seed, "flow-permutations");
  std::vector<FlowBlock> blocks;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const bool second = transforms_second_half(b);
    const std::size_t cond = second ? ceil_half(dim) : dim / 2;
    const std::size_t trans = dim - cond;
    FlowBlock blk = make_block(dim, cond, trans, hidden, &weights);
    for (std::size_t i = dim - 1; i > 0; --i) std::swap(blk.perm[i], blk.perm[perms.below(i + 1)]);
    blocks.push_back(std::move(blk));
  }
  return FlowModel(config.scale, dim, std::move(blocks), false);
}

FlowModel FlowModel::identity(std::size_t dim, std::size_t blocks, std::size_t hidden) {
  std::vector<FlowBlock> list;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t cond = transforms_second_half(b) ? ceil_half(dim) : dim / 2;
    list.push_back(make_block(dim, cond, dim - cond, hidden, nullptr));
  }
  return FlowModel(0, dim, std::move(list), true);
}

std::size_t FlowModel::hidden() const { return blocks_.empty() ? 0 : blocks_.front().scale_net.layers[0].out; }

std::size_t FlowModel::conditioning_size(std::size_t index) const {
  return transforms_second_half(index) ? ceil_half(dim_) : dim_ / 2;
}

std::size_t FlowModel::transformed_size(std::size_t index) const { return dim_ - conditioning_size(index); }

namespace {

template <typename Block, typename Span>
void collect(Block& blk, std::vector<Span>& out) {
  out.emplace_back(blk.log_scale);
  out.emplace_back(blk.shift);
  for (auto* net : {&blk.scale_net, &blk.shift_net})
    for (auto& layer : net->layers) {
      out.emplace_back(layer.weight);
      out.emplace_back(layer.bias);
    }
  out.emplace_back(blk.scale_cap);
}

}  // namespace

std::vector<std::span<double>> FlowModel::parameters() {
  std::vector<std::span<double>> out;
  for (auto& blk : blocks_) collect(blk, out);
  return out;
}

std::vector<std::span<const double>> FlowModel::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& blk : blocks_) collect(blk, out);
  return out;
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (auto p : parameters()) n += p.size();
  return n;
}

// ---------------------------------------------------------------------------

FlowGraph::FlowGraph(diff::Tape& tape, const FlowModel& model, bool trainable) : tape_(tape), model_(model) {
  const auto leaf = [&](const std::vector<double>& values, std::size_t rows, std::size_t cols) {
    Var v = tape_.leaf(Tensor({rows, cols}, values), trainable);
    params_.push_back(v);
    return v;
  };
  for (const FlowBlock& blk : model.blocks()) {
    BlockVars vars;
    vars.log_scale = leaf(blk.log_scale, 1, blk.log_scale.size());
    vars.shift = leaf(blk.shift, 1, blk.shift.size());
    for (std::size_t l = 0; l < kFcnDepth; ++l) {
      const Linear& layer = blk.scale_net.layers[l];
      vars.scale_w[l] = leaf(layer.weight, layer.in, layer.out);
      vars.scale_b[l] = leaf(layer.bias, 1, layer.out);
    }
    for (std::size_t l = 0; l < kFcnDepth; ++l) {
      const Linear& layer = blk.shift_net.layers[l];
      vars.shift_w[l] = leaf(layer.weight, layer.in, layer.out);
      vars.shift_b[l] = leaf(layer.bias, 1, layer.out);
    }
    vars.scale_cap = leaf(blk.scale_cap, 1, blk.scale_cap.size());
    blocks_.push_back(vars);
  }
}

Var FlowGraph::fcn(Var x, const std::array<Var, kFcnDepth>& w, const std::array<Var, kFcnDepth>& bias) {
  Var h = x;
  for (std::size_t l = 0; l < kFcnDepth; ++l) {
    h = diff::add(diff::matmul(h, w[l]), bias[l]);
    if (l + 1 < kFcnDepth) h = diff::tanh(h);
  }
  return h;
}

// Effective per-dimension log scale of the normalization: log_scale - log(var + eps)/2.
Var FlowGraph::norm_log_scale(std::size_t b) {
  const FlowBlock& blk = model_.blocks()[b];
  std::vector<double> inv_std_log(model_.dim());
  for (std::size_t i = 0; i < model_.dim(); ++i) inv_std_log[i] = -0.5 * std::log(blk.running_var[i] + kNormEpsilon);
  return diff::add(blocks_[b].log_scale, tape_.constant(row_tensor(inv_std_log)));
}

namespace {

void fold_batch_statistics(FlowBlock& blk, const Tensor& h) {
  const std::size_t rows = h.dim(0), cols = h.dim(1);
  for (std::size_t j = 0; j < cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += h[i * cols + j];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double d = h[i * cols + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows > 1 ? rows - 1 : 1);
    blk.running_mean[j] = (1.0 - kNormMomentum) * blk.running_mean[j] + kNormMomentum * mean;
    blk.running_var[j] = (1.0 - kNormMomentum) * blk.running_var[j] + kNormMomentum * var;
  }
}

}  // namespace

FlowGraph::Output FlowGraph::forward(Var x, FlowModel* stats) {
  if (x.value().rank() != 2 || x.value().dim(1) != model_.dim())
    throw DimensionError("flow_forward: expected [B, " + std::to_string(model_.dim()) + "] input, got " +
                         diff::to_string(x.value().shape()));
  if (stats && (stats != &model_ || stats->frozen()))
    throw ContractError("flow_forward: statistics can only be updated on the graph's own unfrozen model");
  const std::size_t dim = model_.dim();
  Var h = x;
  Var logdet;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    try {
      const FlowBlock& blk = model_.blocks()[b];
      const BlockVars& vars = blocks_[b];
      if (stats) fold_batch_statistics(stats->blocks()[b], h.value());

      const Var eff = norm_log_scale(b);
      const Var scale = diff::exp(eff);
      const Var mean = tape_.constant(row_tensor(blk.running_mean));
      h = diff::scale_shift(h, scale, diff::subtract(vars.shift, diff::multiply(mean, scale)));
      h = diff::permute(h, blk.perm);

      const std::size_t c = (dim + 1) / 2;
      const bool second = FlowModel::transforms_second_half(b);
      const Var cond = second ? diff::slice(h, 0, c) : diff::slice(h, c, dim);
      const Var trans = second ? diff::slice(h, c, dim) : diff::slice(h, 0, c);
      const Var log_s = diff::multiply(diff::tanh(fcn(cond, vars.scale_w, vars.scale_b)), vars.scale_cap);
      const Var t = fcn(cond, vars.shift_w, vars.shift_b);
      const Var y = diff::add(diff::multiply(trans, diff::exp(log_s)), t);
      h = second ? diff::concat(cond, y) : diff::concat(y, cond);

      const Var block_logdet = diff::add(diff::sum(log_s, diff::Reduce::columns), diff::sum(eff));
      logdet = b == 0 ? block_logdet : diff::add(logdet, block_logdet);
    } catch (const NumericError& e) {
      throw NumericError("flow block " + std::to_string(b) + ": " + e.what());
    }
  }
  return {h, logdet};
}

Var FlowGraph::inverse(Var z) {
  if (z.value().rank() != 2 || z.value().dim(1) != model_.dim())
    throw DimensionError("flow_inverse: expected [B, " + std::to_string(model_.dim()) + "] input, got " +
                         diff::to_string(z.value().shape()));
  const std::size_t dim = model_.dim();
  Var h = z;
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    try {
      const FlowBlock& blk = model_.blocks()[b];
      const BlockVars& vars = blocks_[b];

      const std::size_t c = (dim + 1) / 2;
      const bool second = FlowModel::transforms_second_half(b);
      const Var cond = second ? diff::slice(h, 0, c) : diff::slice(h, c, dim);
      const Var y = second ? diff::slice(h, c, dim) : diff::slice(h, 0, c);
      const Var log_s = diff::multiply(diff::tanh(fcn(cond, vars.scale_w, vars.scale_b)), vars.scale_cap);
      const Var t = fcn(cond, vars.shift_w, vars.shift_b);
      const Var trans = diff::multiply(diff::subtract(y, t), diff::exp(negate(log_s)));
      h = second ? diff::concat(cond, trans) : diff::concat(trans, cond);

      std::vector<std::size_t> inverse_perm(dim);
      for (std::size_t j = 0; j < dim; ++j) inverse_perm[blk.perm[j]] = j;
      h = diff::permute(h, inverse_perm);

      const Var inv_scale = diff::exp(negate(norm_log_scale(b)));
      const Var mean = tape_.constant(row_tensor(blk.running_mean));
      h = diff::scale_shift(h, inv_scale, diff::subtract(mean, diff::multiply(vars.shift, inv_scale)));
    } catch (const NumericError& e) {
      throw NumericError("flow block " + std::to_string(b) + " (inverse): " + e.what());
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

Tensor kernels_to_tensor(std::span<const Kernel> kernels) {
  if (kernels.empty()) throw ContractError("flow: empty kernel batch");
  const std::size_t dim = kernels.front().size();
  std::vector<double> data;
  data.reserve(kernels.size() * dim);
  for (const Kernel& k : kernels) {
    if (k.size() != dim) throw DimensionError("flow: kernels in a batch must share a size");
    data.insert(data.end(), k.weights().begin(), k.weights().end());
  }
  return Tensor({kernels.size(), dim}, std::move(data));
}

ForwardResult flow_forward(const FlowModel& model, std::span<const double> k) {
  if (k.size() != model.dim())
    throw DimensionError("flow_forward: input of " + std::to_string(k.size()) + " values for D=" + std::to_string(model.dim()));
  diff::Tape tape;
  FlowGraph graph(tape, model, false);
  const auto out = graph.forward(tape.constant(Tensor({1, k.size()}, std::vector<double>(k.begin(), k.end()))));
  return {out.z.value().values(), out.logdet.value().item()};
}

ForwardResult flow_forward(const FlowModel& model, const Kernel& k) { return flow_forward(model, k.weights()); }

std::vector<double> flow_inverse_values(const FlowModel& model, std::span<const double> z) {
  if (!model.frozen()) throw ContractError("flow_inverse: model must be frozen");
  if (z.size() != model.dim())
    throw DimensionError("flow_inverse: latent of " + std::to_string(z.size()) + " values for D=" + std::to_string(model.dim()));
  diff::Tape tape;
  FlowGraph graph(tape, model, false);
  const Var k = graph.inverse(tape.constant(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end()))));
  return k.value().values();
}

namespace {

std::size_t side_of(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim || side % 2 == 0)
    throw DimensionError("flow: D=" + std::to_string(dim) + " is not the size of an odd square kernel");
  return side;
}

}  // namespace

Kernel flow_inverse(const FlowModel& model, std::span<const double> z) {
  const std::size_t side = side_of(model.dim());
  return Kernel(side, flow_inverse_values(model, z));
}

Var nll(FlowGraph& graph, Var batch, FlowModel* stats) {
  const auto out = graph.forward(batch, stats);
  diff::Tape& tape = batch.tape();
  const double dim = static_cast<double>(batch.value().dim(1));
  const Var half_sq = diff::multiply(diff::sum(diff::square(out.z), diff::Reduce::columns), tape.constant(Tensor::scalar(0.5)));
  const Var per_sample = diff::subtract(half_sq, out.logdet);
  return diff::add(diff::mean(per_sample), tape.constant(Tensor::scalar(0.5 * dim * std::log(2.0 * std::numbers::pi))));
}

double nll_loss(const FlowModel& model, const Tensor& batch) {
  diff::Tape tape;
  FlowGraph graph(tape, model, false);
  return nll(graph, tape.constant(batch)).value().item();
}

double nll_loss(const FlowModel& model, std::span<const Kernel> batch) { return nll_loss(model, kernels_to_tensor(batch)); }

// ---------------------------------------------------------------------------

double negative_mass_fraction(std::span<const double> raw) {
  double negative = 0.0, total = 0.0;
  for (double w : raw) {
    total += std::abs(w);
    if (w < 0.0) negative -= w;
  }
  return total > 0.0 ? negative / total : 0.0;
}

Kernel post_process(std::span<const double> raw, std::size_t side) {
  std::vector<double> w(raw.begin(), raw.end());
  for (double& v : w) v = std::max(v, 0.0);
  Kernel k(side, std::move(w));
  if (!(k.sum() > 0.0)) throw DegenerateError("kernel has no positive mass after clamping");
  return k.normalized();
}

std::vector<double> project_sphere(std::span<const double> z) {
  double norm = 0.0;
  for (double v : z) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateError("project_sphere: latent has zero or non-finite norm");
  const double factor = std::sqrt(static_cast<double>(z.size())) / norm;
  std::vector<double> out(z.begin(), z.end());
  for (double& v : out) v *= factor;
  return out;
}

SampledKernel sample(const FlowModel& model, Rng& rng, bool project) {
  const std::size_t side = side_of(model.dim());
  std::vector<double> z(model.dim());
  for (double& v : z) v = rng.normal();
  if (project) z = project_sphere(z);
  SampledKernel out;
  out.raw = flow_inverse_values(model, z);
  out.negative_mass = negative_mass_fraction(out.raw);
  out.kernel = post_process(out.raw, side);
  out.latent = std::move(z);
  return out;
}

}  // namespace fkp::flow

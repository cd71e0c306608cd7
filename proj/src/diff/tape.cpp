#include "fkp/diff/tape.hpp"

#include <algorithm>

#include "fkp/error.hpp"

namespace fkp::diff {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::matmul: return "matmul";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::square: return "square";
    case OpKind::conv2d_valid: return "conv2d_valid";
    case OpKind::downsample: return "downsample";
    case OpKind::slice: return "slice";
    case OpKind::concat: return "concat";
    case OpKind::permute: return "permute";
    case OpKind::scale_shift: return "scale_shift";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value admitted to tape");
  nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), requires_grad, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::string_view label, std::vector<Var> inputs, Tensor value,
                 BackwardFn backward) {
  if (!value.all_finite())
    throw NumericError(std::string(label) + ": non-finite output " + to_string(value.shape()));
  Node node{kind, {}, std::move(value), false, false, {}};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(label) + ": input belongs to another tape");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
  if (nodes_.empty()) throw ContractError("backward: empty tape");
  if (nodes_[loss.id_].value.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + to_string(nodes_[loss.id_].value.shape()));

  Gradients out;
  out.grads_.resize(nodes_.size());
  out.zero_index_.assign(nodes_.size(), static_cast<std::size_t>(-1));
  out.grads_[loss.id_] = Tensor(nodes_[loss.id_].value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t n = loss.id_ + 1; n-- > 0;) {
    Node& node = nodes_[n];
    if (node.is_leaf || !node.requires_grad || !out.grads_[n]) continue;
    input_grads.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const std::size_t in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!out.grads_[in]) out.grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
      input_grads[i] = &*out.grads_[in];
    }
    node.backward(node.value, *out.grads_[n], input_grads);
    // intermediate gradients are no longer needed once propagated
    out.grads_[n].reset();
  }
  // leaves that never received gradient report zeros
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (nodes_[n].is_leaf && !out.grads_[n]) {
      out.zero_index_[n] = out.zeros_.size();
      out.zeros_.emplace_back(nodes_[n].value.shape(), 0.0);
    }
  }
  return out;
}

const Tensor& Gradients::of(Var v) const {
  const std::size_t id = v.id();
  if (id >= grads_.size()) throw ContractError("gradients: variable recorded after backward()");
  if (grads_[id]) return *grads_[id];
  if (zero_index_[id] != static_cast<std::size_t>(-1)) return zeros_[zero_index_[id]];
  throw ContractError("gradients: only leaf gradients are retained");
}

}  // namespace fkp::diff

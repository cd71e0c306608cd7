#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fkp/diff/tensor.hpp"

namespace fkp::diff {

enum class OpKind {
  leaf,
  add,
  subtract,
  multiply,
  matmul,
  tanh,
  exp,
  log,
  sum,
  mean,
  square,
  conv2d_valid,
  downsample,
  slice,
  concat,
  permute,
  scale_shift,
  custom,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a tensor recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives an op's output value and the gradient flowing into it, and
/// accumulates into the gradients of its inputs. `input_grads[i]` is null
/// when input i needs none.
using BackwardFn =
    std::function<void(const Tensor& output, const Tensor& output_grad, std::span<Tensor* const> input_grads)>;

class Gradients {
 public:
  /// d(loss)/d(v) with v's shape; zeros if v did not influence the loss.
  const Tensor& of(Var v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<Tensor> zeros_;
  std::vector<std::size_t> zero_index_;
};

/// Ordered record of primitive operations. Nodes are appended in evaluation
/// order, so the record is topologically sorted by construction.
/// A tape is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf whose gradient backward() reports.
  Var leaf(Tensor value, bool requires_grad = true);
  /// A leaf that never receives gradient.
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Append an op. The value is checked for NaN/Inf; `label` names it in diagnostics.
  Var record(OpKind kind, std::string_view label, std::vector<Var> inputs, Tensor value,
             BackwardFn backward);

  /// User-defined primitive with a hand-written adjoint.
  Var custom(std::string_view label, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    return record(OpKind::custom, label, std::move(inputs), std::move(value), std::move(backward));
  }

  Gradients backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

}  // namespace fkp::diff

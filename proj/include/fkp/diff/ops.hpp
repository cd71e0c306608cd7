#pragma once

// Differentiable primitives. Every function appends one node to the tape of
// its first argument and throws DimensionError (naming the op and shapes) on
// incompatible operands.
//
// Elementwise binaries accept equal shapes, or a right operand that
// broadcasts: shape [1, n] against [m, n], or a single element.

#include <cstddef>
#include <span>
#include <vector>

#include "fkp/diff/tape.hpp"

namespace fkp::diff {

Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);

/// [m, k] x [k, n] -> [m, n]
Var matmul(Var a, Var b);

Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);

enum class Reduce { all, columns };

/// Reduce::all -> shape [1]; Reduce::columns on [m, n] -> [m, 1].
Var sum(Var x, Reduce over = Reduce::all);
Var mean(Var x);

/// Valid cross-correlation of a 2-D input with a 2-D kernel: [h, w] * [kh, kw] -> [h-kh+1, w-kw+1].
Var conv2d_valid(Var x, Var kernel);

/// Keep rows and columns 0, s, 2s, ... of a 2-D tensor.
Var downsample(Var x, std::size_t stride);

/// Columns [begin, end) of a 2-D tensor.
Var slice(Var x, std::size_t begin, std::size_t end);

/// Column-wise concatenation of two 2-D tensors with equal row counts.
Var concat(Var a, Var b);

/// out[:, j] = x[:, perm[j]] for a 2-D tensor; perm must be a permutation.
Var permute(Var x, std::span<const std::size_t> perm);

/// out[i, j] = x[i, j] * scale[j] + shift[j]; scale and shift hold n values.
Var scale_shift(Var x, Var scale, Var shift);

/// Operators for readability in model code.
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }

}  // namespace fkp::diff

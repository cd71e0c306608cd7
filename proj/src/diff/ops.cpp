#include "fkp/diff/ops.hpp"

#include <cmath>
#include <string>

#include "fkp/error.hpp"
#include "fkp/parallel/kernels.hpp"

namespace fkp::diff {

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw DimensionError(std::string(op_name(kind)) + ": " + detail);
}

std::string pair_shapes(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " vs " + to_string(b.shape());
}

void require_rank2(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) shape_error(kind, "expected a 2-D tensor, got " + to_string(t.shape()));
}

enum class Broadcast { same, row, scalar };

Broadcast broadcast_mode(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)) return Broadcast::row;
  shape_error(kind, "incompatible shapes " + pair_shapes(a, b));
}

// index into b for element i of a under the broadcast mode
inline std::size_t b_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::same: return i;
    case Broadcast::row: return i % cols;
    case Broadcast::scalar: return 0;
  }
  return i;
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

template <typename Fn>
Var elementwise_binary(OpKind kind, Var a, Var b, Fn&& fn, BackwardFn backward) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = broadcast_mode(kind, av, bv);
  const std::size_t cols = last_dim(av);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fn(av[i], bv[b_index(mode, i, cols)]);
  return a.tape().record(kind, op_name(kind), {a, b}, std::move(out), std::move(backward));
}

// accumulate g (shaped like a) into the gradient of a broadcast operand b
void accumulate_broadcast(Broadcast mode, std::size_t cols, const Tensor& g, Tensor& gb,
                          const Tensor* scale = nullptr) {
  for (std::size_t i = 0; i < g.size(); ++i)
    gb[b_index(mode, i, cols)] += scale ? g[i] * (*scale)[i] : g[i];
}

template <typename Fn, typename Deriv>
Var elementwise_unary(OpKind kind, Var x, Fn&& fn, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fn(xv[i]);
  const Tensor* in = &xv;
  return x.tape().record(kind, op_name(kind), {x}, std::move(out),
                         [in, deriv](const Tensor& y, const Tensor& g, std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv((*in)[i], y[i]);
                         });
}

}  // namespace

Var add(Var a, Var b) {
  const Broadcast mode = broadcast_mode(OpKind::add, a.value(), b.value());
  const std::size_t cols = last_dim(a.value());
  return elementwise_binary(OpKind::add, a, b, [](double x, double y) { return x + y; },
                            [mode, cols](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                              if (grads[0])
                                for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                              if (grads[1]) accumulate_broadcast(mode, cols, g, *grads[1]);
                            });
}

Var subtract(Var a, Var b) {
  const Broadcast mode = broadcast_mode(OpKind::subtract, a.value(), b.value());
  const std::size_t cols = last_dim(a.value());
  return elementwise_binary(OpKind::subtract, a, b, [](double x, double y) { return x - y; },
                            [mode, cols](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                              if (grads[0])
                                for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                              if (grads[1])
                                for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[b_index(mode, i, cols)] -= g[i];
                            });
}

Var multiply(Var a, Var b) {
  const Broadcast mode = broadcast_mode(OpKind::multiply, a.value(), b.value());
  const std::size_t cols = last_dim(a.value());
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  return elementwise_binary(OpKind::multiply, a, b, [](double x, double y) { return x * y; },
                            [mode, cols, av, bv](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                              if (grads[0])
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  (*grads[0])[i] += g[i] * (*bv)[b_index(mode, i, cols)];
                              if (grads[1]) accumulate_broadcast(mode, cols, g, *grads[1], av);
                            });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(OpKind::matmul, av);
  require_rank2(OpKind::matmul, bv);
  if (av.dim(1) != bv.dim(0)) shape_error(OpKind::matmul, "inner extents differ " + pair_shapes(av, bv));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  par::omp::matmul(av.data(), bv.data(), out.data(), m, k, n);
  const Tensor* ap = &av;
  const Tensor* bp = &bv;
  return a.tape().record(OpKind::matmul, "matmul", {a, b}, std::move(out),
                         [ap, bp, m, k, n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) {
                             std::vector<double> tmp(m * k);
                             par::omp::matmul_nt(g.data(), bp->data(), tmp, m, k, n);
                             for (std::size_t i = 0; i < tmp.size(); ++i) (*grads[0])[i] += tmp[i];
                           }
                           if (grads[1]) {
                             std::vector<double> tmp(k * n);
                             par::omp::matmul_tn(ap->data(), g.data(), tmp, m, k, n);
                             for (std::size_t i = 0; i < tmp.size(); ++i) (*grads[1])[i] += tmp[i];
                           }
                         });
}

Var tanh(Var x) {
  return elementwise_unary(OpKind::tanh, x, [](double v) { return std::tanh(v); },
                           [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return elementwise_unary(OpKind::exp, x, [](double v) { return std::exp(v); },
                           [](double, double y) { return y; });
}

Var log(Var x) {
  return elementwise_unary(OpKind::log, x, [](double v) { return std::log(v); },
                           [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return elementwise_unary(OpKind::square, x, [](double v) { return v * v; },
                           [](double v, double) { return 2.0 * v; });
}

Var sum(Var x, Reduce over) {
  const Tensor& xv = x.value();
  if (over == Reduce::all) {
    double acc = 0.0;
    for (double v : xv.data()) acc += v;
    return x.tape().record(OpKind::sum, "sum", {x}, Tensor::scalar(acc),
                           [](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                             const double up = g[0];
                             for (double& v : grads[0]->data()) v += up;
                           });
  }
  require_rank2(OpKind::sum, xv);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out({rows, 1});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += xv[i * cols + j];
    out[i] = acc;
  }
  return x.tape().record(OpKind::sum, "sum", {x}, std::move(out),
                         [rows, cols](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           Tensor& gx = *grads[0];
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[i];
                         });
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (double v : xv.data()) acc += v;
  const double n = static_cast<double>(xv.size());
  return x.tape().record(OpKind::mean, "mean", {x}, Tensor::scalar(acc / n),
                         [n](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           const double up = g[0] / n;
                           for (double& v : grads[0]->data()) v += up;
                         });
}

Var conv2d_valid(Var x, Var kernel) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_rank2(OpKind::conv2d_valid, xv);
  require_rank2(OpKind::conv2d_valid, kv);
  const std::size_t h = xv.dim(0), w = xv.dim(1), kh = kv.dim(0), kw = kv.dim(1);
  if (kh > h || kw > w) shape_error(OpKind::conv2d_valid, "kernel larger than input " + pair_shapes(xv, kv));
  Tensor out({h - kh + 1, w - kw + 1});
  par::omp::correlate_valid(xv.data(), h, w, kv.data(), kh, kw, out.data());
  const Tensor* xp = &xv;
  const Tensor* kp = &kv;
  return x.tape().record(OpKind::conv2d_valid, "conv2d_valid", {x, kernel}, std::move(out),
                         [xp, kp, h, w, kh, kw](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) {
                             std::vector<double> tmp(h * w);
                             par::omp::correlate_valid_grad_input(g.data(), h, w, kp->data(), kh, kw, tmp);
                             for (std::size_t i = 0; i < tmp.size(); ++i) (*grads[0])[i] += tmp[i];
                           }
                           if (grads[1]) {
                             std::vector<double> tmp(kh * kw);
                             par::omp::correlate_valid_grad_kernel(xp->data(), h, w, g.data(), kh, kw, tmp);
                             for (std::size_t i = 0; i < tmp.size(); ++i) (*grads[1])[i] += tmp[i];
                           }
                         });
}

Var downsample(Var x, std::size_t stride) {
  const Tensor& xv = x.value();
  require_rank2(OpKind::downsample, xv);
  if (stride == 0) shape_error(OpKind::downsample, "stride must be positive");
  const std::size_t h = xv.dim(0), w = xv.dim(1);
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  Tensor out({oh, ow});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) out[i * ow + j] = xv[i * stride * w + j * stride];
  return x.tape().record(OpKind::downsample, "downsample", {x}, std::move(out),
                         [w, oh, ow, stride](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < oh; ++i)
                             for (std::size_t j = 0; j < ow; ++j)
                               (*grads[0])[i * stride * w + j * stride] += g[i * ow + j];
                         });
}

Var slice(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank2(OpKind::slice, xv);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (begin >= end || end > cols)
    shape_error(OpKind::slice, "column range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                   ") outside " + to_string(xv.shape()));
  const std::size_t width = end - begin;
  Tensor out({rows, width});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = xv[i * cols + begin + j];
  return x.tape().record(OpKind::slice, "slice", {x}, std::move(out),
                         [rows, cols, begin, width](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < width; ++j) (*grads[0])[i * cols + begin + j] += g[i * width + j];
                         });
}

Var concat(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(OpKind::concat, av);
  require_rank2(OpKind::concat, bv);
  if (av.dim(0) != bv.dim(0)) shape_error(OpKind::concat, "row counts differ " + pair_shapes(av, bv));
  const std::size_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1), cols = ca + cb;
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * cols + j] = av[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * cols + ca + j] = bv[i * cb + j];
  }
  return a.tape().record(OpKind::concat, "concat", {a, b}, std::move(out),
                         [rows, ca, cb, cols](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < rows; ++i) {
                             if (grads[0])
                               for (std::size_t j = 0; j < ca; ++j) (*grads[0])[i * ca + j] += g[i * cols + j];
                             if (grads[1])
                               for (std::size_t j = 0; j < cb; ++j) (*grads[1])[i * cb + j] += g[i * cols + ca + j];
                           }
                         });
}

Var permute(Var x, std::span<const std::size_t> perm) {
  const Tensor& xv = x.value();
  require_rank2(OpKind::permute, xv);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (perm.size() != cols)
    shape_error(OpKind::permute, "permutation of length " + std::to_string(perm.size()) + " for " + to_string(xv.shape()));
  std::vector<bool> seen(cols, false);
  for (std::size_t p : perm) {
    if (p >= cols || seen[p]) throw ContractError("permute: index list is not a permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> order(perm.begin(), perm.end());
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + order[j]];
  return x.tape().record(OpKind::permute, "permute", {x}, std::move(out),
                         [rows, cols, order = std::move(order)](const Tensor&, const Tensor& g,
                                                                std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < rows; ++i)
                             for (std::size_t j = 0; j < cols; ++j) (*grads[0])[i * cols + order[j]] += g[i * cols + j];
                         });
}

Var scale_shift(Var x, Var scale, Var shift) {
  const Tensor& xv = x.value();
  const Tensor& sv = scale.value();
  const Tensor& tv = shift.value();
  const std::size_t cols = last_dim(xv);
  if (sv.size() != cols || tv.size() != cols)
    shape_error(OpKind::scale_shift, "per-column parameters " + to_string(sv.shape()) + ", " + to_string(tv.shape()) +
                                         " for input " + to_string(xv.shape()));
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * sv[i % cols] + tv[i % cols];
  const Tensor* xp = &xv;
  const Tensor* sp = &sv;
  return x.tape().record(OpKind::scale_shift, "scale_shift", {x, scale, shift}, std::move(out),
                         [xp, sp, cols](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const std::size_t c = i % cols;
                             if (grads[0]) (*grads[0])[i] += g[i] * (*sp)[c];
                             if (grads[1]) (*grads[1])[c] += g[i] * (*xp)[i];
                             if (grads[2]) (*grads[2])[c] += g[i];
                           }
                         });
}

}  // namespace fkp::diff

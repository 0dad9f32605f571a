// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "hgdpo/errors.hpp"
#include "hgdpo/kernels.hpp"

namespace hgdpo::ad {

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

const Tensor& Graph::value(std::size_t id) const { return nodes_.at(id).value(); }

Var Graph::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::external(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& param) {
  Node n;
  n.borrowed = &param.value;
  if (recording()) {
    n.requires_grad = true;
    n.param = &param;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = recording();
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (recording()) {
    for (const auto& in : inputs) n.requires_grad = n.requires_grad || in.requires_grad();
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::accumulate(std::size_t id, std::span<const double> g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = Tensor(n.value().shape(), std::vector<double>(g.begin(), g.end()));
    return;
  }
  auto dst = n.grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Graph::accumulate(std::size_t id, const Tensor& g) { accumulate(id, g.data()); }

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value().shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var root) {
  if (!recording()) throw ValidationError("backward() on an inference-mode graph");
  if (root.size() != 1) throw ShapeError("backward: root must be scalar, got shape " + to_string(root.shape()));
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Tensor(root.shape(), 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
}

namespace {

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
}

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Reduces a full-size gradient to the shape of a possibly-broadcast operand.
void accumulate_operand(Graph& g, Var operand, const Tensor& full, bool was_scalar) {
  if (!operand.requires_grad()) return;
  if (was_scalar) {
    g.accumulate(operand.id(), std::vector<double>{sum_of(full.data())});
  } else {
    g.accumulate(operand.id(), full);
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, Broadcast kind, F f) {
  const Tensor& shape_src = kind == Broadcast::kLeftScalar ? b : a;
  Tensor out(shape_src.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = kind == Broadcast::kLeftScalar ? a[0] : a[i];
    const double y = kind == Broadcast::kRightScalar ? b[0] : b[i];
    out[i] = f(x, y);
  }
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Numerically stable log(sigmoid(x)) = -softplus(-x).
double log_sigmoid_value(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = a.graph();
  const auto kind = broadcast_kind("add", a.value(), b.value());
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
  return g.record(std::move(out), {a, b}, [a, b, kind](Graph& gr, const Tensor& go) {
    accumulate_operand(gr, a, go, kind == Broadcast::kLeftScalar);
    accumulate_operand(gr, b, go, kind == Broadcast::kRightScalar);
  });
}

Var sub(Var a, Var b) {
  Graph& g = a.graph();
  const auto kind = broadcast_kind("sub", a.value(), b.value());
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
  return g.record(std::move(out), {a, b}, [a, b, kind](Graph& gr, const Tensor& go) {
    accumulate_operand(gr, a, go, kind == Broadcast::kLeftScalar);
    if (b.requires_grad()) {
      accumulate_operand(gr, b, map(go, [](double v) { return -v; }), kind == Broadcast::kRightScalar);
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = a.graph();
  const auto kind = broadcast_kind("mul", a.value(), b.value());
  Tensor out = zip(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
  return g.record(std::move(out), {a, b}, [a, b, kind](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.requires_grad()) {
      Tensor ga(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] = go[i] * (kind == Broadcast::kRightScalar ? bv[0] : bv[i]);
      accumulate_operand(gr, a, ga, kind == Broadcast::kLeftScalar);
    }
    if (b.requires_grad()) {
      Tensor gb(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] = go[i] * (kind == Broadcast::kLeftScalar ? av[0] : av[i]);
      accumulate_operand(gr, b, gb, kind == Broadcast::kRightScalar);
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = map(a.value(), [s](double x) { return s * x; });
  return a.graph().record(std::move(out), {a}, [a, s](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id(), map(go, [s](double v) { return s * v; }));
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = map(a.value(), [s](double x) { return x + s; });
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) { gr.accumulate(a.id(), go); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var square(Var a) {
  Tensor out = map(a.value(), [](double x) { return x * x; });
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    Tensor ga(go.shape());
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] = 2.0 * av[i] * go[i];
    gr.accumulate(a.id(), ga);
  });
}

Var relu(Var a) {
  Tensor out = map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    Tensor ga(go.shape());
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] = av[i] > 0.0 ? go[i] : 0.0;
    gr.accumulate(a.id(), ga);
  });
}

Var silu(Var a) {
  Tensor out = map(a.value(), [](double x) { return x * sigmoid_value(x); });
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    Tensor ga(go.shape());
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double s = sigmoid_value(av[i]);
      ga[i] = go[i] * (s + av[i] * s * (1.0 - s));
    }
    gr.accumulate(a.id(), ga);
  });
}

Var sigmoid(Var a) {
  Tensor out = map(a.value(), sigmoid_value);
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    Tensor ga(go.shape());
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double s = sigmoid_value(av[i]);
      ga[i] = go[i] * s * (1.0 - s);
    }
    gr.accumulate(a.id(), ga);
  });
}

Var log_sigmoid(Var a) {
  Tensor out = map(a.value(), log_sigmoid_value);
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    const Tensor& av = a.value();
    Tensor ga(go.shape());
    // d/dx log(sigmoid(x)) = sigmoid(-x)
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] = go[i] * sigmoid_value(-av[i]);
    gr.accumulate(a.id(), ga);
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  return a.graph().record(std::move(out), {a, b}, [a, b, m, k, n](Graph& gr, const Tensor& go) {
    if (a.requires_grad()) {
      Tensor ga({m, k});
      kernels::gemm_nt(go.data(), b.value().data(), ga.data(), m, n, k);
      gr.accumulate(a.id(), ga);
    }
    if (b.requires_grad()) {
      Tensor gb({k, n});
      kernels::gemm_tn(a.value().data(), go.data(), gb.data(), m, k, n);
      gr.accumulate(b.id(), gb);
    }
  });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var linear(Var x, Var w, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  require_rank2("linear", xv);
  require_rank2("linear", wv);
  if (xv.dim(1) != wv.dim(0) || bv.size() != wv.dim(1)) {
    throw ShapeError("linear: shapes " + to_string(xv.shape()) + ", " + to_string(wv.shape()) + ", bias " +
                     to_string(bv.shape()));
  }
  const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
  Tensor out({m, n});
  kernels::gemm_nn(xv.data(), wv.data(), out.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += bv[j];
  }
  return x.graph().record(std::move(out), {x, w, bias}, [x, w, bias, m, k, n](Graph& gr, const Tensor& go) {
    if (x.requires_grad()) {
      Tensor gx({m, k});
      kernels::gemm_nt(go.data(), w.value().data(), gx.data(), m, n, k);
      gr.accumulate(x.id(), gx);
    }
    if (w.requires_grad()) {
      Tensor gw({k, n});
      kernels::gemm_tn(x.value().data(), go.data(), gw.data(), m, k, n);
      gr.accumulate(w.id(), gw);
    }
    if (bias.requires_grad()) {
      Tensor gb(bias.value().shape(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
      }
      gr.accumulate(bias.id(), gb);
    }
  });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(sum_of(a.value().data()));
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id(), Tensor(a.value().shape(), go[0]));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.size());
  Tensor out = Tensor::scalar(sum_of(a.value().data()) / n);
  return a.graph().record(std::move(out), {a}, [a, n](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id(), Tensor(a.value().shape(), go[0] / n));
  });
}

Var row_mean(Var a) {
  const Tensor& av = a.value();
  if (av.rank() < 2) throw ShapeError("row_mean: expected rank >= 2, got " + to_string(av.shape()));
  const std::size_t rows = av.dim(0), width = av.row_size();
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) out[r] = sum_of(av.row(r)) / static_cast<double>(width);
  return a.graph().record(std::move(out), {a}, [a, rows, width](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = go[r] / static_cast<double>(width);
      auto dst = ga.row(r);
      for (auto& d : dst) d = v;
    }
    gr.accumulate(a.id(), ga);
  });
}

Var row_scale(Var a, std::vector<double> coeffs) {
  const Tensor& av = a.value();
  if (av.rank() < 1 || coeffs.size() != av.dim(0)) {
    throw ShapeError("row_scale: " + std::to_string(coeffs.size()) + " coefficients for shape " +
                     to_string(av.shape()));
  }
  Tensor out(av.shape());
  const std::size_t width = av.row_size();
  for (std::size_t r = 0; r < coeffs.size(); ++r) {
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = coeffs[r] * av[r * width + j];
  }
  return a.graph().record(std::move(out), {a}, [a, coeffs = std::move(coeffs), width](Graph& gr, const Tensor& go) {
    Tensor ga(go.shape());
    for (std::size_t r = 0; r < coeffs.size(); ++r) {
      for (std::size_t j = 0; j < width; ++j) ga[r * width + j] = coeffs[r] * go[r * width + j];
    }
    gr.accumulate(a.id(), ga);
  });
}

Var channel_mean(Var a) {
  const Tensor& av = a.value();
  std::size_t batch = 1, channels = 0;
  Shape out_shape;
  if (av.rank() == 3) {
    channels = av.dim(0);
    out_shape = {channels};
  } else if (av.rank() == 4) {
    batch = av.dim(0);
    channels = av.dim(1);
    out_shape = {batch, channels};
  } else {
    throw ShapeError("channel_mean: expected [C,H,W] or [B,C,H,W], got " + to_string(av.shape()));
  }
  const std::size_t plane = av.size() / (batch * channels);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < batch * channels; ++i) {
    out[i] = sum_of(av.data().subspan(i * plane, plane)) / static_cast<double>(plane);
  }
  return a.graph().record(std::move(out), {a}, [a, batch, channels, plane](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape());
    for (std::size_t i = 0; i < batch * channels; ++i) {
      const double v = go[i] / static_cast<double>(plane);
      for (std::size_t j = 0; j < plane; ++j) ga[i * plane + j] = v;
    }
    gr.accumulate(a.id(), ga);
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rows = parts.front().value().rank() == 2 ? parts.front().value().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.dim(0) != rows) {
      throw ShapeError("concat: shapes " + to_string(parts.front().shape()) + " and " + to_string(v.shape()));
    }
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < widths[p]; ++j) out[r * total + offset + j] = v[r * widths[p] + j];
    }
    offset += widths[p];
  }
  return parts.front().graph().record(std::move(out), parts,
                                      [parts, widths, rows, total](Graph& gr, const Tensor& go) {
                                        std::size_t off = 0;
                                        for (std::size_t p = 0; p < parts.size(); ++p) {
                                          if (parts[p].requires_grad()) {
                                            Tensor gp({rows, widths[p]});
                                            for (std::size_t r = 0; r < rows; ++r) {
                                              for (std::size_t j = 0; j < widths[p]; ++j) {
                                                gp[r * widths[p] + j] = go[r * total + off + j];
                                              }
                                            }
                                            gr.accumulate(parts[p].id(), gp);
                                          }
                                          off += widths[p];
                                        }
                                      });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record(std::move(out), {a}, [a](Graph& gr, const Tensor& go) { gr.accumulate(a.id(), go.data()); });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (av.rank() < 1 || begin >= end || end > av.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of shape " +
                     to_string(av.shape()));
  }
  Tensor out = av.slice_rows(begin, end);
  return a.graph().record(std::move(out), {a}, [a, begin](Graph& gr, const Tensor& go) {
    Tensor ga(a.value().shape(), 0.0);
    const std::size_t width = a.value().size() / a.value().dim(0);
    std::copy(go.data().begin(), go.data().end(), ga.data().begin() + static_cast<std::ptrdiff_t>(begin * width));
    gr.accumulate(a.id(), ga);
  });
}

}  // namespace hgdpo::ad

// Copyright 2026 The ssvfnas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ssvfnas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ssvfnas/kernels.hpp"

namespace ssvfnas::ad {
namespace {

Graph& graph_of(std::initializer_list<Var> vars) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::logic_error("op on an unbound Var");
    if (g && v.graph() != g) throw std::logic_error("op mixes Vars from different graphs");
    g = v.graph();
  }
  return *g;
}

void accumulate(std::vector<Tensor>& adj, std::vector<bool>& has, std::size_t id,
                Tensor&& contrib) {
  if (!has[id]) {
    adj[id] = std::move(contrib);
    has[id] = true;
    return;
  }
  auto dst = adj[id].data();
  auto src = contrib.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

template <class F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

}  // namespace

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::softmax: return "softmax";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::scale: return "scale";
    case OpKind::scale_by: return "scale_by";
    case OpKind::index: return "index";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::dot: return "dot";
    case OpKind::row_dot: return "row_dot";
    case OpKind::normalize_rows: return "normalize_rows";
    case OpKind::resize_cols: return "resize_cols";
    case OpKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("value() of an unbound Var");
  return graph_->value(id_);
}

const Tensor& Gradients::operator[](const std::string& name) const {
  auto it = named_.find(name);
  if (it == named_.end()) throw std::out_of_range("no gradient for parameter '" + name + "'");
  return it->second;
}

const Tensor& Gradients::wrt(Var input) const {
  auto it = inputs_.find(input.id());
  if (it == inputs_.end()) throw std::out_of_range("input was not marked requires_grad");
  return it->second;
}

double Gradients::global_norm() const noexcept {
  double s = 0.0;
  for (const auto& [name, g] : named_) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

Var Graph::input(Tensor value) {
  Node n;
  n.needs_grad = value.requires_grad();
  n.tracked_input = n.needs_grad;
  n.value = std::move(value);
  if (!n.value.all_finite()) throw NumericError("graph input contains non-finite values");
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) { return input(std::move(value.set_requires_grad(false))); }

Var Graph::param(const std::string& name, const Tensor& value) {
  if (param_ids_.count(name)) throw std::invalid_argument("parameter '" + name + "' bound twice");
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' is non-finite");
  Node n;
  n.value = value;
  n.needs_grad = true;
  n.name = name;
  nodes_.push_back(std::move(n));
  param_ids_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

std::map<std::string, Var> Graph::bind(const ParamSet& params, const std::string& prefix) {
  std::map<std::string, Var> out;
  for (const auto& [name, t] : params) out.emplace(name, param(prefix + name, t));
  return out;
}

Var Graph::record(OpKind kind, std::vector<Var> inputs, Tensor value, Aux aux) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(kind));
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.aux = std::move(aux);
  for (const Var& v : inputs) {
    n.inputs.push_back(v.id());
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(Var loss) const {
  if (!loss.valid() || loss.graph() != this || loss.id() >= nodes_.size()) {
    throw std::logic_error("backward: loss was not produced by a forward pass on this graph");
  }
  const Tensor& v = nodes_[loss.id()].value;
  if (v.size() != 1) throw ShapeError("backward: loss is not scalar, shape " + shape_string(v.shape()));
  return backward(loss, Tensor(v.shape(), 1.0));
}

Gradients Graph::backward(Var output, const Tensor& seed) const {
  if (!output.valid() || output.graph() != this || output.id() >= nodes_.size()) {
    throw std::logic_error("backward: output was not produced by a forward pass on this graph");
  }
  require_same_shape(nodes_[output.id()].value, seed, "backward seed");

  const std::size_t top = output.id();
  std::vector<Tensor> adj(top + 1);
  std::vector<bool> has(top + 1, false);
  adj[top] = seed;
  has[top] = true;

  for (std::size_t i = top + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!has[i] || !node.needs_grad || node.kind == OpKind::leaf) continue;
    propagate(node, adj[i], adj, has);
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.kind != OpKind::leaf || !node.needs_grad) continue;
    Tensor g = (i <= top && has[i]) ? adj[i] : Tensor(node.value.shape(), 0.0);
    if (node.tracked_input) {
      out.inputs_.emplace(i, std::move(g));
    } else {
      out.named_.emplace(node.name, std::move(g));
    }
  }
  return out;
}

void Graph::propagate(const Node& node, const Tensor& up, std::vector<Tensor>& adj,
                      std::vector<bool>& has) const {
  auto in = [&](std::size_t k) -> const Node& { return nodes_[node.inputs[k]]; };
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].needs_grad; };
  auto give = [&](std::size_t k, Tensor&& t) { accumulate(adj, has, node.inputs[k], std::move(t)); };
  const Tensor& y = node.value;

  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      if (wants(0)) {
        Tensor da(Shape{m, k});
        kernels::matmul_a_bt(up.data(), b.data(), da.data(), {m, k, n});
        give(0, std::move(da));
      }
      if (wants(1)) {
        Tensor db(Shape{k, n});
        kernels::matmul_at_b(a.data(), up.data(), db.data(), {m, k, n});
        give(1, std::move(db));
      }
      break;
    }
    case OpKind::add:
      if (wants(0)) give(0, Tensor(up));
      if (wants(1)) give(1, Tensor(up));
      break;
    case OpKind::sub:
      if (wants(0)) give(0, Tensor(up));
      if (wants(1)) give(1, map_values(up, [](double v) { return -v; }));
      break;
    case OpKind::mul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (wants(0)) {
        Tensor da(a.shape());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = up[i] * b[i];
        give(0, std::move(da));
      }
      if (wants(1)) {
        Tensor db(b.shape());
        for (std::size_t i = 0; i < db.size(); ++i) db[i] = up[i] * a[i];
        give(1, std::move(db));
      }
      break;
    }
    case OpKind::add_bias: {
      if (wants(0)) give(0, Tensor(up));
      if (wants(1)) {
        const std::size_t rows = up.rows(), cols = up.cols();
        Tensor db(in(1).value.shape());
        kernels::column_sums(up.data(), db.data(), rows, cols);
        give(1, std::move(db));
      }
      break;
    }
    case OpKind::relu: {
      const Tensor& x = in(0).value;
      Tensor dx(x.shape());
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? up[i] : 0.0;
      give(0, std::move(dx));
      break;
    }
    case OpKind::tanh: {
      Tensor dx(y.shape());
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = up[i] * (1.0 - y[i] * y[i]);
      give(0, std::move(dx));
      break;
    }
    case OpKind::exp: {
      Tensor dx(y.shape());
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = up[i] * y[i];
      give(0, std::move(dx));
      break;
    }
    case OpKind::log: {
      const Tensor& x = in(0).value;
      Tensor dx(x.shape());
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = up[i] / x[i];
      give(0, std::move(dx));
      break;
    }
    case OpKind::softmax: {
      const std::size_t width = y.shape().back();
      const std::size_t rows = y.size() / width;
      Tensor dx(y.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < width; ++j) s += up[r * width + j] * y[r * width + j];
        for (std::size_t j = 0; j < width; ++j) {
          dx[r * width + j] = y[r * width + j] * (up[r * width + j] - s);
        }
      }
      give(0, std::move(dx));
      break;
    }
    case OpKind::sum:
      give(0, Tensor(in(0).value.shape(), up.item()));
      break;
    case OpKind::mean: {
      const Tensor& x = in(0).value;
      give(0, Tensor(x.shape(), up.item() / static_cast<double>(x.size())));
      break;
    }
    case OpKind::l2_norm: {
      const Tensor& x = in(0).value;
      const double norm = y.item();
      Tensor dx(x.shape());
      if (norm > 0.0) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = up.item() * x[i] / norm;
      }
      give(0, std::move(dx));
      break;
    }
    case OpKind::scale: {
      const double c = node.aux.scalar;
      give(0, map_values(up, [c](double v) { return c * v; }));
      break;
    }
    case OpKind::scale_by: {
      const double s = in(0).value.item();
      const Tensor& x = in(1).value;
      if (wants(0)) {
        double ds = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) ds += up[i] * x[i];
        give(0, Tensor(in(0).value.shape(), ds));
      }
      if (wants(1)) give(1, map_values(up, [s](double v) { return s * v; }));
      break;
    }
    case OpKind::index: {
      Tensor dv(in(0).value.shape());
      dv[node.aux.a] = up.item();
      give(0, std::move(dv));
      break;
    }
    case OpKind::concat_cols: {
      const std::size_t rows = y.rows(), total = y.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t w = node.aux.widths[k];
        if (wants(k)) {
          Tensor part(Shape{rows, w});
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) part.at(r, j) = up[r * total + offset + j];
          }
          give(k, std::move(part));
        }
        offset += w;
      }
      break;
    }
    case OpKind::slice_rows: {
      const Tensor& x = in(0).value;
      Tensor dx(x.shape());
      const std::size_t cols = x.cols();
      std::copy(up.data().begin(), up.data().end(),
                dx.data().begin() + static_cast<std::ptrdiff_t>(node.aux.a * cols));
      give(0, std::move(dx));
      break;
    }
    case OpKind::dot: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      const double g = up.item();
      if (wants(0)) give(0, map_values(b, [g](double v) { return g * v; }));
      if (wants(1)) give(1, map_values(a, [g](double v) { return g * v; }));
      break;
    }
    case OpKind::row_dot: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      const std::size_t rows = a.rows(), cols = a.cols();
      if (wants(0)) {
        Tensor da(a.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) da.at(r, j) = up[r] * b.at(r, j);
        }
        give(0, std::move(da));
      }
      if (wants(1)) {
        Tensor db(b.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) db.at(r, j) = up[r] * a.at(r, j);
        }
        give(1, std::move(db));
      }
      break;
    }
    case OpKind::normalize_rows: {
      const Tensor& norms = node.aux.saved;
      const std::size_t rows = y.rows(), cols = y.cols();
      Tensor dx(y.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double proj = 0.0;
        for (std::size_t j = 0; j < cols; ++j) proj += y.at(r, j) * up.at(r, j);
        for (std::size_t j = 0; j < cols; ++j) {
          dx.at(r, j) = (up.at(r, j) - y.at(r, j) * proj) / norms[r];
        }
      }
      give(0, std::move(dx));
      break;
    }
    case OpKind::resize_cols: {
      const Tensor& x = in(0).value;
      const std::size_t rows = x.rows(), in_cols = x.cols(), out_cols = y.cols();
      const std::size_t keep = std::min(in_cols, out_cols);
      Tensor dx(x.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < keep; ++j) dx.at(r, j) = up.at(r, j);
      }
      give(0, std::move(dx));
      break;
    }
    case OpKind::cross_entropy: {
      const Tensor& probs = node.aux.saved;
      const std::size_t rows = probs.rows(), classes = probs.cols();
      const double g = up.item() / static_cast<double>(rows);
      Tensor dz(probs.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double target = static_cast<std::size_t>(node.aux.labels[r]) == c ? 1.0 : 0.0;
          dz.at(r, c) = g * (probs.at(r, c) - target);
        }
      }
      give(0, std::move(dz));
      break;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner extents differ " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(Shape{m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), {m, k, n});
  return g.record(OpKind::matmul, {a, b}, std::move(out));
}

namespace {
template <class F>
Var binary_elementwise(Var a, Var b, OpKind kind, F f) {
  Graph& g = graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, op_name(kind));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return g.record(kind, {a, b}, std::move(out));
}

template <class F>
Var unary_elementwise(Var x, OpKind kind, F f) {
  Graph& g = graph_of({x});
  return g.record(kind, {x}, map_values(x.value(), f));
}
}  // namespace

Var operator+(Var a, Var b) {
  return binary_elementwise(a, b, OpKind::add, [](double x, double y) { return x + y; });
}
Var operator-(Var a, Var b) {
  return binary_elementwise(a, b, OpKind::sub, [](double x, double y) { return x - y; });
}
Var operator*(Var a, Var b) {
  return binary_elementwise(a, b, OpKind::mul, [](double x, double y) { return x * y; });
}

Var add_bias(Var x, Var bias) {
  Graph& g = graph_of({x, bias});
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_bias");
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                     shape_string(xv.shape()));
  }
  Tensor out = xv;
  kernels::add_row_bias(out.data(), bv.data(), xv.rows(), xv.cols());
  return g.record(OpKind::add_bias, {x, bias}, std::move(out));
}

Var relu(Var x) {
  return unary_elementwise(x, OpKind::relu, [](double v) { return v > 0.0 ? v : 0.0; });
}
Var tanh(Var x) {
  return unary_elementwise(x, OpKind::tanh, [](double v) { return std::tanh(v); });
}
Var exp(Var x) {
  return unary_elementwise(x, OpKind::exp, [](double v) { return std::exp(v); });
}
Var log(Var x) {
  return unary_elementwise(x, OpKind::log, [](double v) { return std::log(v); });
}

Var softmax(Var x) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 1 && xv.rank() != 2) throw ShapeError("softmax: rank must be 1 or 2");
  const std::size_t width = xv.shape().back();
  const std::size_t rows = xv.size() / width;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, xv[r * width + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[r * width + j] = std::exp(xv[r * width + j] - mx);
      z += out[r * width + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] /= z;
  }
  return g.record(OpKind::softmax, {x}, std::move(out));
}

Var sum(Var x) {
  Graph& g = graph_of({x});
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.record(OpKind::sum, {x}, Tensor::scalar(s));
}

Var mean(Var x) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  if (xv.size() == 0) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return g.record(OpKind::mean, {x}, Tensor::scalar(s / static_cast<double>(xv.size())));
}

Var l2_norm(Var x) {
  Graph& g = graph_of({x});
  return g.record(OpKind::l2_norm, {x}, Tensor::scalar(x.value().l2_norm()));
}

Var scale(Var x, double c) {
  Graph& g = graph_of({x});
  Graph::Aux aux;
  aux.scalar = c;
  return g.record(OpKind::scale, {x}, map_values(x.value(), [c](double v) { return c * v; }),
                  std::move(aux));
}

Var scale_by(Var s, Var x) {
  Graph& g = graph_of({s, x});
  if (s.value().size() != 1) throw ShapeError("scale_by: factor must be scalar");
  const double c = s.value().item();
  return g.record(OpKind::scale_by, {s, x},
                  map_values(x.value(), [c](double v) { return c * v; }));
}

Var index(Var v, std::size_t i) {
  Graph& g = graph_of({v});
  const Tensor& vv = v.value();
  require_rank(vv, 1, "index");
  if (i >= vv.size()) throw ShapeError("index: out of range");
  Graph::Aux aux;
  aux.a = i;
  return g.record(OpKind::index, {v}, Tensor::scalar(vv[i]), std::move(aux));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph& g = graph_of({parts.front()});
  const std::size_t rows = parts.front().value().rows();
  Graph::Aux aux;
  std::size_t total = 0;
  for (const Var& p : parts) {
    graph_of({parts.front(), p});
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    aux.widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out(Shape{rows, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < pv.cols(); ++j) out.at(r, offset + j) = pv.at(r, j);
    }
    offset += pv.cols();
  }
  return g.record(OpKind::concat_cols, parts, std::move(out), std::move(aux));
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_rows");
  if (begin > end || end > xv.rows()) throw ShapeError("slice_rows: bad range");
  const std::size_t cols = xv.cols();
  Tensor out(Shape{end - begin, cols});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
              (end - begin) * cols, out.data().begin());
  Graph::Aux aux;
  aux.a = begin;
  aux.b = end;
  return g.record(OpKind::slice_rows, {x}, std::move(out), std::move(aux));
}

Var dot(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 1, "dot");
  require_same_shape(av, bv, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return g.record(OpKind::dot, {a, b}, Tensor::scalar(s));
}

Var row_dot(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "row_dot");
  require_same_shape(av, bv, "row_dot");
  Tensor out(Shape{av.rows(), 1});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av.at(r, j) * bv.at(r, j);
    out[r] = s;
  }
  return g.record(OpKind::row_dot, {a, b}, std::move(out));
}

Var normalize_rows(Var x) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  require_rank(xv, 2, "normalize_rows");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Graph::Aux aux;
  aux.saved = Tensor(Shape{rows});
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += xv.at(r, j) * xv.at(r, j);
    const double norm = std::sqrt(s);
    if (!(norm > 0.0)) throw NumericError("normalize_rows: zero-norm row");
    aux.saved[r] = norm;
    for (std::size_t j = 0; j < cols; ++j) out.at(r, j) = xv.at(r, j) / norm;
  }
  return g.record(OpKind::normalize_rows, {x}, std::move(out), std::move(aux));
}

Var resize_cols(Var x, std::size_t cols) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  require_rank(xv, 2, "resize_cols");
  const std::size_t keep = std::min(cols, xv.cols());
  Tensor out(Shape{xv.rows(), cols});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t j = 0; j < keep; ++j) out.at(r, j) = xv.at(r, j);
  }
  return g.record(OpKind::resize_cols, {x}, std::move(out));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Graph& g = graph_of({logits});
  const Tensor& z = logits.value();
  require_rank(z, 2, "cross_entropy");
  const std::size_t rows = z.rows(), classes = z.cols();
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count != rows");
  if (rows == 0) throw ShapeError("cross_entropy: empty batch");
  Graph::Aux aux;
  aux.labels.assign(labels.begin(), labels.end());
  aux.saved = Tensor(z.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ShapeError("cross_entropy: label out of range");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, z.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z.at(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < classes; ++c) aux.saved.at(r, c) = std::exp(z.at(r, c) - lse);
    total += lse - z.at(r, static_cast<std::size_t>(labels[r]));
  }
  return g.record(OpKind::cross_entropy, {logits},
                  Tensor::scalar(total / static_cast<double>(rows)), std::move(aux));
}

double grad_check(const ScalarFn& fn, const ParamSet& point, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  Gradients analytic;
  {
    Graph g;
    Var loss = fn(g, point);
    analytic = g.backward(loss);
  }
  auto evaluate = [&](const ParamSet& p) {
    Graph g;
    return fn(g, p).value().item();
  };
  double worst = 0.0;
  ParamSet probe = point;
  for (const auto& [name, value] : point) {
    if (!analytic.contains(name)) continue;
    const Tensor& grad = analytic[name];
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = slot[i];
      slot[i] = saved + eps;
      const double up = evaluate(probe);
      slot[i] = saved - eps;
      const double down = evaluate(probe);
      slot[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ssvfnas::ad

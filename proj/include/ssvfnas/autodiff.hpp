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

#ifndef SSVFNAS_AUTODIFF_HPP
#define SSVFNAS_AUTODIFF_HPP

// Define-by-run reverse-mode differentiation over dense tensors.
//
// Building a graph *is* the forward pass: every op evaluates eagerly, checks
// its output for NaN/Inf, and appends a record holding the op kind, its input
// ids and the values backward needs. backward() walks the records in exact
// reverse order of construction. A graph may be differentiated any number of
// times with different output seeds; it is never mutated by backward().

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssvfnas/tensor.hpp"

namespace ssvfnas::ad {

/// Named parameter tensors, iterated in name order.
using ParamSet = std::map<std::string, Tensor>;

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  mul,
  add_bias,
  relu,
  tanh,
  exp,
  log,
  softmax,
  sum,
  mean,
  l2_norm,
  scale,
  scale_by,
  index,
  concat_cols,
  slice_rows,
  dot,
  row_dot,
  normalize_rows,
  resize_cols,
  cross_entropy,
};

const char* op_name(OpKind kind) noexcept;

class Graph;

/// Handle to one recorded value.
class Var {
 public:
  Var() = default;
  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Gradients {
 public:
  bool contains(const std::string& name) const { return named_.count(name) != 0; }
  const Tensor& operator[](const std::string& name) const;
  /// Gradient reaching a graph input created with requires_grad set.
  const Tensor& wrt(Var input) const;

  const std::map<std::string, Tensor>& named() const noexcept { return named_; }
  std::map<std::string, Tensor>& named() noexcept { return named_; }

  double global_norm() const noexcept;

 private:
  friend class Graph;
  std::map<std::string, Tensor> named_;
  std::map<std::size_t, Tensor> inputs_;
};

/// Per-node data an op needs in backward beyond its inputs.
struct NodeAux {
  double scalar = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<int> labels;
  std::vector<std::size_t> widths;
  Tensor saved;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Records an input. It receives a gradient iff value.requires_grad().
  Var input(Tensor value);
  Var constant(Tensor value);
  /// Binds a named parameter; names are unique within a graph.
  Var param(const std::string& name, const Tensor& value);
  /// Binds every entry of `params`, prefixing names with `prefix`.
  std::map<std::string, Var> bind(const ParamSet& params, const std::string& prefix = "");

  /// Gradients of a scalar output.
  Gradients backward(Var loss) const;
  /// Vector-Jacobian product of an arbitrary output with `seed`.
  Gradients backward(Var output, const Tensor& seed) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  using Aux = NodeAux;

  // Used by the op functions below.
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, Aux aux = {});

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool needs_grad = false;
    bool tracked_input = false;
    std::string name;
    Aux aux;
  };

  void propagate(const Node& node, const Tensor& upstream,
                 std::vector<Tensor>& adj, std::vector<bool>& has_adj) const;

  // deque keeps references returned by value() stable while recording.
  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
};

// Op functions. All inputs must belong to the same graph.
Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
/// x (rows x n) plus bias (n) broadcast over rows; the only broadcasting op.
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
/// Softmax over the last axis (whole vector for rank 1, per row for rank 2).
Var softmax(Var x);
Var sum(Var x);
Var mean(Var x);
Var l2_norm(Var x);
Var scale(Var x, double c);
/// Scalar-valued s times x.
Var scale_by(Var s, Var x);
/// Element i of a rank-1 tensor, as a scalar.
Var index(Var v, std::size_t i);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var dot(Var a, Var b);
/// Per-row dot product, rows x 1.
Var row_dot(Var a, Var b);
/// Each row divided by its L2 norm. Zero rows are an error.
Var normalize_rows(Var x);
/// Fixed projection to `cols` columns: truncates or zero-pads.
Var resize_cols(Var x, std::size_t cols);
/// Mean over rows of softmax cross-entropy of logits against integer labels.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Scalar function of a parameter point, built on a fresh graph.
using ScalarFn = std::function<Var(Graph&, const ParamSet&)>;

/// Largest relative disagreement, over every coordinate of every parameter,
/// between the reverse-mode gradient and a central difference with step eps.
/// The denominator is max(|analytic|, |numeric|, 1e-6).
double grad_check(const ScalarFn& fn, const ParamSet& point, double eps);

}  // namespace ssvfnas::ad

#endif  // SSVFNAS_AUTODIFF_HPP

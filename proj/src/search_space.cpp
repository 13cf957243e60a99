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

#include "ssvfnas/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace ssvfnas::nas {

std::string_view op_name(CandidateOp op) noexcept {
  switch (op) {
    case CandidateOp::zero: return "zero";
    case CandidateOp::skip_connect: return "skip_connect";
    case CandidateOp::linear_relu: return "linear_relu";
    case CandidateOp::linear_tanh: return "linear_tanh";
  }
  return "?";
}

CandidateOp parse_op(std::string_view name) {
  for (auto op : {CandidateOp::zero, CandidateOp::skip_connect, CandidateOp::linear_relu,
                  CandidateOp::linear_tanh}) {
    if (op_name(op) == name) return op;
  }
  throw std::invalid_argument("unknown candidate op '" + std::string(name) + "'");
}

bool is_parametric(CandidateOp op) noexcept {
  return op == CandidateOp::linear_relu || op == CandidateOp::linear_tanh;
}

OpSet OpSet::defaults() {
  return OpSet{{CandidateOp::zero, CandidateOp::skip_connect, CandidateOp::linear_relu,
                CandidateOp::linear_tanh}};
}

void OpSet::validate() const {
  if (ops.size() < 2) throw std::invalid_argument("op set needs at least 2 candidates");
  if (std::count(ops.begin(), ops.end(), CandidateOp::zero) > 1) {
    throw std::invalid_argument("op set lists 'zero' more than once");
  }
  if (std::all_of(ops.begin(), ops.end(), [](CandidateOp o) { return o == CandidateOp::zero; })) {
    throw std::invalid_argument("op set has no non-zero candidate");
  }
}

std::vector<double> arch_softmax(std::span<const double> alpha_edge) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : alpha_edge) {
    if (!std::isfinite(a)) throw NumericError("arch_softmax: non-finite logit");
    mx = std::max(mx, a);
  }
  std::vector<double> w(alpha_edge.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(alpha_edge[i] - mx);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

std::string Supernet::weight_name(std::size_t edge, CandidateOp op) {
  return "e" + std::to_string(edge) + "/" + std::string(op_name(op)) + "/W";
}

std::string Supernet::bias_name(std::size_t edge, CandidateOp op) {
  return "e" + std::to_string(edge) + "/" + std::string(op_name(op)) + "/b";
}

std::string Supernet::alpha_name(std::size_t edge) { return "alpha/e" + std::to_string(edge); }

std::pair<Supernet, ArchParams> Supernet::build(std::size_t nodes, std::size_t hidden,
                                                std::size_t in_dim, std::size_t out_dim,
                                                const OpSet& opset, std::uint64_t seed) {
  if (nodes < 2) throw std::invalid_argument("supernet needs at least 2 nodes");
  if (hidden == 0 || in_dim == 0 || out_dim == 0) {
    throw std::invalid_argument("supernet dimensions must be positive");
  }
  opset.validate();

  Supernet net;
  net.opset_ = opset;
  net.node_dims_.assign(nodes, hidden);
  net.node_dims_.front() = in_dim;
  net.node_dims_.back() = out_dim;
  for (std::size_t j = 1; j < nodes; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      net.edges_.push_back({i, j, net.node_dims_[i], net.node_dims_[j]});
    }
  }

  std::mt19937_64 rng(seed);
  for (std::size_t e = 0; e < net.edges_.size(); ++e) {
    const Edge& edge = net.edges_[e];
    const double s = 1.0 / std::sqrt(static_cast<double>(edge.in_dim));
    std::uniform_real_distribution<double> init(-s, s);
    for (CandidateOp op : opset.ops) {
      if (!is_parametric(op)) continue;
      Tensor w(Shape{edge.in_dim, edge.out_dim});
      for (double& v : w.data()) v = init(rng);
      Tensor b(Shape{edge.out_dim});
      for (double& v : b.data()) v = init(rng);
      net.weights_.emplace(weight_name(e, op), std::move(w));
      net.weights_.emplace(bias_name(e, op), std::move(b));
    }
  }

  ArchParams arch{Tensor(Shape{net.edges_.size(), opset.size()}, 0.0)};
  return {std::move(net), std::move(arch)};
}

std::vector<std::size_t> Supernet::incoming(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (edges_[e].to == node) out.push_back(e);
  }
  return out;
}

std::size_t Supernet::edge_index(std::size_t from, std::size_t to) const {
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    if (edges_[e].from == from && edges_[e].to == to) return e;
  }
  throw std::out_of_range("no edge " + std::to_string(from) + "->" + std::to_string(to));
}

nlohmann::json DiscreteArch::to_json() const {
  nlohmann::json edges_doc = nlohmann::json::array();
  for (const RetainedEdge& r : edges) {
    edges_doc.push_back({{"from", r.from}, {"to", r.to}, {"op", std::string(op_name(r.op))}});
  }
  return nlohmann::json{{"edges", std::move(edges_doc)}};
}

DiscreteArch DiscreteArch::from_json(const nlohmann::json& doc, const Supernet& topology) {
  DiscreteArch arch;
  for (const auto& e : doc.at("edges")) {
    RetainedEdge r;
    r.from = e.at("from").get<std::size_t>();
    r.to = e.at("to").get<std::size_t>();
    r.op = parse_op(e.at("op").get<std::string>());
    r.edge = topology.edge_index(r.from, r.to);
    arch.edges.push_back(r);
  }
  validate_discrete(arch, topology);
  return arch;
}

bool operator==(const DiscreteArch& a, const DiscreteArch& b) {
  if (a.edges.size() != b.edges.size()) return false;
  for (std::size_t i = 0; i < a.edges.size(); ++i) {
    const auto& x = a.edges[i];
    const auto& y = b.edges[i];
    if (x.edge != y.edge || x.from != y.from || x.to != y.to || x.op != y.op) return false;
  }
  return true;
}

BoundSupernet bind_supernet(ad::Graph& g, const Supernet& net, const ArchParams* arch,
                            const std::string& prefix, bool train_weights) {
  BoundSupernet bound;
  bound.net = &net;
  for (const auto& [name, t] : net.weights()) {
    bound.weights.emplace(name, train_weights ? g.param(prefix + name, t) : g.constant(t));
  }
  if (arch) {
    if (arch->alpha.rank() != 2 || arch->alpha.rows() != net.edges().size() ||
        arch->alpha.cols() != net.opset().size()) {
      throw ShapeError("arch params " + shape_string(arch->alpha.shape()) +
                       " do not match supernet topology");
    }
    for (std::size_t e = 0; e < net.edges().size(); ++e) {
      auto row = arch->row(e);
      Tensor t(Shape{row.size()}, std::vector<double>(row.begin(), row.end()));
      bound.alpha_rows.push_back(g.param(prefix + Supernet::alpha_name(e), t));
    }
  }
  return bound;
}

Tensor gather_alpha_grad(const ad::Gradients& grads, const Supernet& net,
                         const std::string& prefix) {
  const std::size_t ops = net.opset().size();
  Tensor out(Shape{net.edges().size(), ops});
  for (std::size_t e = 0; e < net.edges().size(); ++e) {
    const Tensor& g = grads[prefix + Supernet::alpha_name(e)];
    std::copy(g.data().begin(), g.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(e * ops));
  }
  return out;
}

ad::Var candidate_forward(const BoundSupernet& bound, std::size_t edge, CandidateOp op,
                          ad::Var x) {
  const Edge& e = bound.net->edges().at(edge);
  if (x.value().rank() != 2 || x.value().cols() != e.in_dim) {
    throw ShapeError("edge " + std::to_string(edge) + " expects input width " +
                     std::to_string(e.in_dim) + ", got " + shape_string(x.shape()));
  }
  switch (op) {
    case CandidateOp::zero:
      return x.graph()->constant(Tensor(Shape{x.value().rows(), e.out_dim}, 0.0));
    case CandidateOp::skip_connect:
      return e.in_dim == e.out_dim ? x : ad::resize_cols(x, e.out_dim);
    case CandidateOp::linear_relu:
    case CandidateOp::linear_tanh: {
      ad::Var w = bound.weights.at(Supernet::weight_name(edge, op));
      ad::Var b = bound.weights.at(Supernet::bias_name(edge, op));
      ad::Var z = ad::add_bias(ad::matmul(x, w), b);
      return op == CandidateOp::linear_relu ? ad::relu(z) : ad::tanh(z);
    }
  }
  throw std::logic_error("unhandled candidate op");
}

namespace {

ad::Var accumulate(std::optional<ad::Var>& acc, ad::Var term) {
  acc = acc ? (*acc + term) : term;
  return *acc;
}

ad::Var zeros_like_edge(const BoundSupernet& bound, std::size_t edge, ad::Var x) {
  const Edge& e = bound.net->edges().at(edge);
  return x.graph()->constant(Tensor(Shape{x.value().rows(), e.out_dim}, 0.0));
}

}  // namespace

ad::Var mixed_op_forward(const BoundSupernet& bound, std::size_t edge, ad::Var weights,
                         ad::Var x) {
  const auto& ops = bound.net->opset().ops;
  if (weights.value().rank() != 1 || weights.value().size() != ops.size()) {
    throw ShapeError("mixed op weights must have one entry per candidate");
  }
  std::optional<ad::Var> acc;
  for (std::size_t o = 0; o < ops.size(); ++o) {
    if (ops[o] == CandidateOp::zero) continue;
    ad::Var term = ad::scale_by(ad::index(weights, o), candidate_forward(bound, edge, ops[o], x));
    accumulate(acc, term);
  }
  return acc ? *acc : zeros_like_edge(bound, edge, x);
}

ad::Var mixed_op_forward(const BoundSupernet& bound, std::size_t edge,
                         std::span<const double> weights, ad::Var x) {
  const auto& ops = bound.net->opset().ops;
  if (weights.size() != ops.size()) {
    throw ShapeError("mixed op weights must have one entry per candidate");
  }
  std::optional<ad::Var> acc;
  for (std::size_t o = 0; o < ops.size(); ++o) {
    if (ops[o] == CandidateOp::zero || weights[o] == 0.0) continue;
    ad::Var out = candidate_forward(bound, edge, ops[o], x);
    if (weights[o] != 1.0) out = ad::scale(out, weights[o]);
    accumulate(acc, out);
  }
  return acc ? *acc : zeros_like_edge(bound, edge, x);
}

namespace {

template <class EdgeFn>
ad::Var run_dag(const BoundSupernet& bound, ad::Var x, EdgeFn edge_fn) {
  const Supernet& net = *bound.net;
  if (x.value().rank() != 2 || x.value().cols() != net.in_dim()) {
    throw ShapeError("supernet expects input width " + std::to_string(net.in_dim()) + ", got " +
                     shape_string(x.shape()));
  }
  std::vector<std::optional<ad::Var>> node(net.num_nodes());
  node[0] = x;
  const auto& edges = net.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    std::optional<ad::Var> contribution = edge_fn(e, *node[edges[e].from]);
    if (!contribution) continue;
    accumulate(node[edges[e].to], *contribution);
  }
  for (std::size_t j = 1; j < net.num_nodes(); ++j) {
    if (!node[j]) {
      node[j] = x.graph()->constant(Tensor(Shape{x.value().rows(), net.node_dim(j)}, 0.0));
    }
  }
  return *node.back();
}

}  // namespace

ad::Var soft_forward(const BoundSupernet& bound, ad::Var x) {
  if (bound.alpha_rows.size() != bound.net->edges().size()) {
    throw std::logic_error("soft_forward needs bound alpha rows");
  }
  return run_dag(bound, x, [&](std::size_t e, ad::Var in) -> std::optional<ad::Var> {
    return mixed_op_forward(bound, e, ad::softmax(bound.alpha_rows[e]), in);
  });
}

ad::Var weighted_forward(const BoundSupernet& bound, const Tensor& edge_weights, ad::Var x) {
  const std::size_t ops = bound.net->opset().size();
  if (edge_weights.rank() != 2 || edge_weights.rows() != bound.net->edges().size() ||
      edge_weights.cols() != ops) {
    throw ShapeError("edge weight table does not match supernet topology");
  }
  return run_dag(bound, x, [&](std::size_t e, ad::Var in) -> std::optional<ad::Var> {
    auto row = edge_weights.data().subspan(e * ops, ops);
    if (std::all_of(row.begin(), row.end(), [](double w) { return w == 0.0; })) {
      return std::nullopt;
    }
    return mixed_op_forward(bound, e, row, in);
  });
}

Tensor indicator_weights(const Supernet& net, const DiscreteArch& arch) {
  validate_discrete(arch, net);
  const auto& ops = net.opset().ops;
  Tensor w(Shape{net.edges().size(), ops.size()}, 0.0);
  for (const RetainedEdge& r : arch.edges) {
    const auto o = static_cast<std::size_t>(std::find(ops.begin(), ops.end(), r.op) - ops.begin());
    w.at(r.edge, o) = 1.0;
  }
  return w;
}

ad::Var hard_forward(const BoundSupernet& bound, const DiscreteArch& arch, ad::Var x) {
  return weighted_forward(bound, indicator_weights(*bound.net, arch), x);
}

DiscreteArch discretize(const ArchParams& arch, const Supernet& net) {
  const auto& ops = net.opset().ops;
  if (arch.alpha.rank() != 2 || arch.alpha.rows() != net.edges().size() ||
      arch.alpha.cols() != ops.size()) {
    throw ShapeError("arch params do not match supernet topology");
  }
  const std::size_t num_edges = net.edges().size();
  std::vector<std::size_t> best_op(num_edges);
  std::vector<double> strength(num_edges);
  for (std::size_t e = 0; e < num_edges; ++e) {
    auto row = arch.row(e);
    const auto weights = arch_softmax(row);
    std::size_t best = ops.size();
    for (std::size_t o = 0; o < ops.size(); ++o) {
      if (ops[o] == CandidateOp::zero) continue;
      if (best == ops.size() || row[o] > row[best]) best = o;
    }
    best_op[e] = best;
    strength[e] = weights[best];
  }

  DiscreteArch out;
  for (std::size_t j = 1; j < net.num_nodes(); ++j) {
    std::vector<std::size_t> in = net.incoming(j);
    std::stable_sort(in.begin(), in.end(), [&](std::size_t a, std::size_t b) {
      return strength[a] > strength[b];
    });
    in.resize(std::min<std::size_t>(2, in.size()));
    std::sort(in.begin(), in.end());
    for (std::size_t e : in) {
      out.edges.push_back({e, net.edges()[e].from, net.edges()[e].to, ops[best_op[e]]});
    }
  }
  std::sort(out.edges.begin(), out.edges.end(),
            [](const RetainedEdge& a, const RetainedEdge& b) { return a.edge < b.edge; });
  return out;
}

void validate_discrete(const DiscreteArch& arch, const Supernet& net) {
  const auto& ops = net.opset().ops;
  std::vector<std::size_t> kept(net.num_nodes(), 0);
  std::vector<bool> seen(net.edges().size(), false);
  for (const RetainedEdge& r : arch.edges) {
    if (r.edge >= net.edges().size()) throw std::invalid_argument("discrete arch: bad edge index");
    const Edge& e = net.edges()[r.edge];
    if (e.from != r.from || e.to != r.to) {
      throw std::invalid_argument("discrete arch: edge endpoints disagree with topology");
    }
    if (seen[r.edge]) throw std::invalid_argument("discrete arch: edge retained twice");
    seen[r.edge] = true;
    if (r.op == CandidateOp::zero) throw std::invalid_argument("discrete arch: zero op retained");
    if (std::find(ops.begin(), ops.end(), r.op) == ops.end()) {
      throw std::invalid_argument("discrete arch: op not in the supernet's op set");
    }
    ++kept[r.to];
  }
  for (std::size_t j = 1; j < net.num_nodes(); ++j) {
    const std::size_t want = std::min<std::size_t>(2, net.incoming(j).size());
    if (kept[j] != want) {
      throw std::invalid_argument("discrete arch: node " + std::to_string(j) + " keeps " +
                                  std::to_string(kept[j]) + " edges, expected " +
                                  std::to_string(want));
    }
  }
}

}  // namespace ssvfnas::nas

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

#ifndef SSVFNAS_SEARCH_SPACE_HPP
#define SSVFNAS_SEARCH_SPACE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ssvfnas/autodiff.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::nas {

enum class CandidateOp : std::uint8_t { zero, skip_connect, linear_relu, linear_tanh };

std::string_view op_name(CandidateOp op) noexcept;
CandidateOp parse_op(std::string_view name);
bool is_parametric(CandidateOp op) noexcept;

/// Ordered candidate operations shared by every edge.
struct OpSet {
  std::vector<CandidateOp> ops;

  static OpSet defaults();
  void validate() const;
  std::size_t size() const noexcept { return ops.size(); }
};

/// softmax over one edge's architecture logits.
std::vector<double> arch_softmax(std::span<const double> alpha_edge);

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

/// Architecture logits, one row per edge and one column per candidate op.
struct ArchParams {
  Tensor alpha;

  std::size_t num_edges() const { return alpha.rows(); }
  std::span<const double> row(std::size_t e) const {
    return alpha.data().subspan(e * alpha.cols(), alpha.cols());
  }
};

/// Fully connected DAG over `nodes` nodes. Node 0 is the input (in_dim wide),
/// the last node is the output (out_dim wide), the rest are hidden. Every pair
/// i < j is joined by an edge; edges are ordered by destination, then source.
class Supernet {
 public:
  static std::pair<Supernet, ArchParams> build(std::size_t nodes, std::size_t hidden,
                                               std::size_t in_dim, std::size_t out_dim,
                                               const OpSet& opset, std::uint64_t seed);

  std::size_t num_nodes() const noexcept { return node_dims_.size(); }
  std::size_t node_dim(std::size_t node) const { return node_dims_.at(node); }
  std::size_t in_dim() const { return node_dims_.front(); }
  std::size_t out_dim() const { return node_dims_.back(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const OpSet& opset() const noexcept { return opset_; }
  std::vector<std::size_t> incoming(std::size_t node) const;
  std::size_t edge_index(std::size_t from, std::size_t to) const;

  /// Parameters of every parametric candidate on every edge.
  const ad::ParamSet& weights() const noexcept { return weights_; }
  ad::ParamSet& weights() noexcept { return weights_; }

  static std::string weight_name(std::size_t edge, CandidateOp op);
  static std::string bias_name(std::size_t edge, CandidateOp op);
  static std::string alpha_name(std::size_t edge);

 private:
  std::vector<std::size_t> node_dims_;
  std::vector<Edge> edges_;
  OpSet opset_;
  ad::ParamSet weights_;
};

/// One edge kept by discretization and the operation chosen for it.
struct RetainedEdge {
  std::size_t edge = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  CandidateOp op = CandidateOp::skip_connect;
};

struct DiscreteArch {
  std::vector<RetainedEdge> edges;

  nlohmann::json to_json() const;
  static DiscreteArch from_json(const nlohmann::json& doc, const Supernet& topology);
  friend bool operator==(const DiscreteArch& a, const DiscreteArch& b);
};

/// Supernet parameters bound into a graph. Weights keep their ParamSet names
/// under `prefix`; alpha rows are bound as `prefix + alpha_name(e)`.
struct BoundSupernet {
  const Supernet* net = nullptr;
  std::map<std::string, ad::Var> weights;
  std::vector<ad::Var> alpha_rows;
};

/// Binds weights, and alpha rows when `arch` is non-null. When `train_weights`
/// is false the weights enter as constants (no gradient).
BoundSupernet bind_supernet(ad::Graph& g, const Supernet& net, const ArchParams* arch,
                            const std::string& prefix, bool train_weights = true);

/// Reassembles per-edge alpha row gradients into an [edges x ops] tensor.
Tensor gather_alpha_grad(const ad::Gradients& grads, const Supernet& net,
                         const std::string& prefix);

/// o(x) for one candidate on one edge.
ad::Var candidate_forward(const BoundSupernet& bound, std::size_t edge, CandidateOp op,
                          ad::Var x);

/// sum_o w_o * o(x) with differentiable weights (rank 1, one per candidate).
ad::Var mixed_op_forward(const BoundSupernet& bound, std::size_t edge, ad::Var weights,
                         ad::Var x);

/// Same mixture with fixed weights; candidates whose weight is exactly zero
/// are not evaluated and a weight of exactly one is applied without scaling.
ad::Var mixed_op_forward(const BoundSupernet& bound, std::size_t edge,
                         std::span<const double> weights, ad::Var x);

/// Relaxed network: every edge mixes its candidates by softmax(alpha row).
ad::Var soft_forward(const BoundSupernet& bound, ad::Var x);

/// Network with fixed per-edge weight vectors (one row per edge).
ad::Var weighted_forward(const BoundSupernet& bound, const Tensor& edge_weights, ad::Var x);

/// Indicator weights of a discretization: one-hot rows on retained edges,
/// all-zero rows elsewhere.
Tensor indicator_weights(const Supernet& net, const DiscreteArch& arch);

/// Discrete network; identical arithmetic to weighted_forward with indicator weights.
ad::Var hard_forward(const BoundSupernet& bound, const DiscreteArch& arch, ad::Var x);

/// argmax over non-zero candidates per edge; each non-input node keeps its
/// min(2, indegree) strongest incoming edges. Ties go to the lowest index.
DiscreteArch discretize(const ArchParams& arch, const Supernet& net);

void validate_discrete(const DiscreteArch& arch, const Supernet& net);

}  // namespace ssvfnas::nas

#endif  // SSVFNAS_SEARCH_SPACE_HPP

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

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ssvfnas/search_space.hpp"

using namespace ssvfnas;
using namespace ssvfnas::nas;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t(Shape{r, c});
  for (double& v : t.data()) v = d(rng);
  return t;
}

Tensor soft_output(const Supernet& net, const ArchParams& arch, const Tensor& x) {
  ad::Graph g;
  auto bound = bind_supernet(g, net, &arch, "");
  return soft_forward(bound, g.constant(x)).value();
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  const auto w = arch_softmax(std::vector<double>{0, 0, 0, 0});
  for (double v : w) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("softmax is stable for large logits") {
  const auto w = arch_softmax(std::vector<double>{1000, 1000 + std::log(3.0)});
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
}

TEST_CASE("mixed skip/zero edge scales its input by the skip weight") {
  const OpSet ops{{CandidateOp::skip_connect, CandidateOp::zero}};
  auto [net, arch] = Supernet::build(2, 3, 3, 3, ops, 1);
  REQUIRE(net.edges().size() == 1);
  const Tensor x = Tensor::matrix(1, 3, {2, -4, 1});

  Tensor y = soft_output(net, arch, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(0.5 * x[i]).epsilon(1e-15));

  arch.alpha[0] = std::log(3.0);
  y = soft_output(net, arch, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(0.75 * x[i]).epsilon(1e-14));
}

TEST_CASE("supernet gradients match central differences in weights and alpha") {
  auto [net, arch] = Supernet::build(3, 5, 4, 3, OpSet::defaults(), 7);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 0.5);
  for (double& v : arch.alpha.data()) v = d(rng);
  const Tensor x = random_matrix(6, 4, 3);

  // Weights keep their names; alpha rows are bound as one parameter per edge.
  ad::ParamSet point = net.weights();
  for (std::size_t e = 0; e < arch.num_edges(); ++e) {
    auto row = arch.row(e);
    point.emplace(Supernet::alpha_name(e), Tensor(Shape{row.size()}, {row.begin(), row.end()}));
  }
  auto loss = [&](ad::Graph& g, const ad::ParamSet& p) {
    Supernet probe = net;
    for (auto& [name, t] : probe.weights()) t = p.at(name);
    ArchParams a = arch;
    for (std::size_t e = 0; e < a.num_edges(); ++e) {
      const Tensor& r = p.at(Supernet::alpha_name(e));
      for (std::size_t o = 0; o < r.size(); ++o) a.alpha.at(e, o) = r[o];
    }
    auto bound = bind_supernet(g, probe, &a, "");
    ad::Var y = soft_forward(bound, g.constant(x));
    return ad::sum(ad::tanh(y) * ad::tanh(y));
  };
  CHECK(ad::grad_check(loss, point, 1e-5) < 1e-4);
}

TEST_CASE("edge count is n(n-1)/2") {
  for (std::size_t n : {2u, 3u, 4u, 5u}) {
    auto [net, arch] = Supernet::build(n, 4, 3, 2, OpSet::defaults(), 0);
    CHECK(net.edges().size() == n * (n - 1) / 2);
    CHECK(arch.alpha.rows() == net.edges().size());
    CHECK(arch.alpha.cols() == 4);
  }
}

TEST_CASE("equal seeds build identical supernets and outputs") {
  auto [a, aa] = Supernet::build(4, 6, 5, 3, OpSet::defaults(), 11);
  auto [b, ba] = Supernet::build(4, 6, 5, 3, OpSet::defaults(), 11);
  for (const auto& [name, t] : a.weights()) CHECK(t == b.weights().at(name));
  const Tensor x = random_matrix(4, 5, 1);
  CHECK(soft_output(a, aa, x) == soft_output(b, ba, x));
}

TEST_CASE("discretize never keeps the zero op") {
  auto [net, arch] = Supernet::build(4, 4, 3, 2, OpSet::defaults(), 0);
  for (std::size_t e = 0; e < arch.num_edges(); ++e) arch.alpha.at(e, 0) = 50.0;
  const DiscreteArch d = discretize(arch, net);
  for (const auto& r : d.edges) CHECK(r.op != CandidateOp::zero);
  validate_discrete(d, net);
}

TEST_CASE("discretize breaks ties toward the lowest index") {
  auto [net, arch] = Supernet::build(4, 4, 3, 2, OpSet::defaults(), 0);
  const DiscreteArch d = discretize(arch, net);
  // Uniform alpha: first non-zero op, and the two lowest-indexed inputs per node.
  std::vector<std::size_t> kept;
  for (const auto& r : d.edges) {
    CHECK(r.op == CandidateOp::skip_connect);
    kept.push_back(r.edge);
  }
  // Node 1: edge 0. Node 2: edges 1, 2. Node 3: edges 3, 4 (from 0 and 1).
  CHECK(kept == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("discretize keeps the strongest incoming edges") {
  auto [net, arch] = Supernet::build(4, 4, 3, 2, OpSet::defaults(), 0);
  const std::size_t e03 = net.edge_index(0, 3), e23 = net.edge_index(2, 3);
  arch.alpha.at(e03, 3) = 2.0;
  arch.alpha.at(e23, 2) = 1.0;
  const DiscreteArch d = discretize(arch, net);
  std::vector<RetainedEdge> into3;
  for (const auto& r : d.edges)
    if (r.to == 3) into3.push_back(r);
  REQUIRE(into3.size() == 2);
  CHECK(into3[0].edge == e03);
  CHECK(into3[0].op == CandidateOp::linear_tanh);
  CHECK(into3[1].edge == e23);
  CHECK(into3[1].op == CandidateOp::linear_relu);
}

TEST_CASE("discretize is invariant to a per-edge shift of alpha") {
  auto [net, arch] = Supernet::build(4, 4, 3, 2, OpSet::defaults(), 0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  for (double& v : arch.alpha.data()) v = d(rng);
  ArchParams shifted = arch;
  for (std::size_t e = 0; e < arch.num_edges(); ++e)
    for (std::size_t o = 0; o < 4; ++o) shifted.alpha.at(e, o) += 3.0;
  CHECK(discretize(arch, net) == discretize(shifted, net));
}

TEST_CASE("discrete network equals the mixture with indicator weights bitwise") {
  auto [net, arch] = Supernet::build(4, 5, 3, 2, OpSet::defaults(), 9);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  for (double& v : arch.alpha.data()) v = d(rng);
  const DiscreteArch da = discretize(arch, net);
  const Tensor x = random_matrix(5, 3, 6);
  ad::Graph g;
  auto bound = bind_supernet(g, net, nullptr, "");
  const Tensor hard = hard_forward(bound, da, g.constant(x)).value();
  const Tensor mixed = weighted_forward(bound, indicator_weights(net, da), g.constant(x)).value();
  CHECK(hard == mixed);
}

TEST_CASE("discrete arch round-trips through json") {
  auto [net, arch] = Supernet::build(4, 4, 3, 2, OpSet::defaults(), 0);
  arch.alpha.at(2, 2) = 1.0;
  const DiscreteArch d = discretize(arch, net);
  CHECK(DiscreteArch::from_json(d.to_json(), net) == d);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS(Supernet::build(1, 4, 3, 2, OpSet::defaults(), 0));
  CHECK_THROWS(Supernet::build(3, 0, 3, 2, OpSet::defaults(), 0));
  CHECK_THROWS(OpSet{{}}.validate());
  CHECK_THROWS(parse_op("conv3x3"));
  auto [net, arch] = Supernet::build(3, 4, 3, 2, OpSet::defaults(), 0);
  DiscreteArch bad = discretize(arch, net);
  bad.edges.front().op = CandidateOp::zero;
  CHECK_THROWS(validate_discrete(bad, net));
  ArchParams wrong{Tensor(Shape{1, 4})};
  CHECK_THROWS_AS(discretize(wrong, net), ShapeError);
}

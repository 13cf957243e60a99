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
#include <random>

#include "doctest.h"
#include "ssvfnas/autodiff.hpp"

using namespace ssvfnas;
using ad::Graph;
using ad::ParamSet;
using ad::Var;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = d(rng);
  return t;
}

ParamSet two_layer_point(unsigned seed) {
  std::mt19937_64 rng(seed);
  return {{"W1", random_tensor({3, 4}, rng, 0.7)},
          {"b1", random_tensor({4}, rng, 0.3)},
          {"W2", random_tensor({4, 2}, rng, 0.7)},
          {"b2", random_tensor({2}, rng, 0.3)}};
}

Tensor two_layer_input() {
  return Tensor::matrix(2, 3, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75});
}

Var two_layer(Graph& g, const ParamSet& p) {
  auto v = g.bind(p);
  Var x = g.constant(two_layer_input());
  Var h = ad::tanh(ad::add_bias(ad::matmul(x, v.at("W1")), v.at("b1")));
  return ad::tanh(ad::add_bias(ad::matmul(h, v.at("W2")), v.at("b2")));
}

}  // namespace

TEST_CASE("identity weight passes the input through") {
  Graph g;
  Var x = g.constant(Tensor::matrix(1, 2, {1, 2}));
  Var w = g.param("W", Tensor::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(ad::matmul(x, w).value() == Tensor::matrix(1, 2, {1, 2}));
}

TEST_CASE("relu zeroes non-positive entries") {
  Graph g;
  Var y = ad::relu(g.constant(Tensor::vector({-1, 0, 2})));
  CHECK(y.value() == Tensor::vector({0, 0, 2}));
}

TEST_CASE("two-layer tanh net agrees with a hand-written forward pass") {
  const ParamSet p = two_layer_point(3);
  Graph g;
  const Tensor out = two_layer(g, p).value();

  const Tensor x = two_layer_input();
  const Tensor &W1 = p.at("W1"), &b1 = p.at("b1"), &W2 = p.at("W2"), &b2 = p.at("b2");
  for (std::size_t r = 0; r < 2; ++r) {
    double h[4];
    for (std::size_t j = 0; j < 4; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < 3; ++i) s += x.at(r, i) * W1.at(i, j);
      h[j] = std::tanh(s);
    }
    for (std::size_t j = 0; j < 2; ++j) {
      double s = b2[j];
      for (std::size_t i = 0; i < 4; ++i) s += h[i] * W2.at(i, j);
      CHECK(out.at(r, j) == doctest::Approx(std::tanh(s)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradient of sum(w * x) is x") {
  Graph g;
  const Tensor x = Tensor::vector({3, -1, 0.5});
  Var w = g.param("w", Tensor::vector({1, 2, 3}));
  const auto grads = g.backward(ad::sum(w * g.constant(x)));
  CHECK(grads["w"] == x);
}

TEST_CASE("gradient of half squared norm is the point itself") {
  Graph g;
  const Tensor w0 = Tensor::vector({0.5, -2, 4});
  Var w = g.param("w", w0);
  const auto grads = g.backward(ad::scale(ad::sum(w * w), 0.5));
  CHECK(grads["w"] == w0);
}

TEST_CASE("random two-layer net matches central differences") {
  auto loss = [](Graph& g, const ParamSet& p) { return ad::sum(two_layer(g, p)); };
  for (unsigned seed : {1u, 2u, 3u}) CHECK(ad::grad_check(loss, two_layer_point(seed), 1e-4) < 1e-4);
}

TEST_CASE("quadratic bowl is exact up to roundoff") {
  auto bowl = [](Graph& g, const ParamSet& p) {
    Var w = g.param("w", p.at("w"));
    Var c = g.constant(Tensor::vector({1, -2, 0.5}));
    Var d = w - c;
    return ad::sum(d * d);
  };
  CHECK(ad::grad_check(bowl, {{"w", Tensor::vector({0.3, 0.7, -1.1})}}, 1e-3) < 1e-8);
}

TEST_CASE("softmax cross-entropy head matches central differences") {
  std::mt19937_64 rng(9);
  const ParamSet p{{"W", random_tensor({4, 5}, rng)}, {"b", random_tensor({5}, rng)}};
  const Tensor x = random_tensor({6, 4}, rng);
  const std::vector<int> y{0, 4, 2, 2, 1, 3};
  auto head = [&](Graph& g, const ParamSet& q) {
    auto v = g.bind(q);
    return ad::cross_entropy(ad::add_bias(ad::matmul(g.constant(x), v.at("W")), v.at("b")), y);
  };
  CHECK(ad::grad_check(head, p, 1e-4) < 1e-4);
}

TEST_CASE("every differentiable op kind matches central differences") {
  std::mt19937_64 rng(17);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  Tensor pos = random_tensor({3, 4}, rng);
  for (double& v : pos.data()) v = std::abs(v) + 0.5;
  const Tensor m = random_tensor({4, 2}, rng);
  const Tensor bias = random_tensor({4}, rng);
  const Tensor vec = random_tensor({4}, rng);
  // Fixed projection so every op reduces to a scalar with a non-trivial gradient.
  auto project = [&](Graph& g, Var y) {
    Tensor w(y.shape());
    std::mt19937_64 r(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : w.data()) v = u(r);
    return ad::sum(y * g.constant(w));
  };
  struct Case {
    const char* name;
    ad::ScalarFn fn;
    ParamSet point;
  };
  const std::vector<int> labels{1, 0, 3};
  std::vector<Case> cases{
      {"matmul", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, ad::matmul(v.at("a"), v.at("m"))); }, {{"a", a}, {"m", m}}},
      {"add", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, v.at("a") + v.at("b")); }, {{"a", a}, {"b", b}}},
      {"sub", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, v.at("a") - v.at("b")); }, {{"a", a}, {"b", b}}},
      {"mul", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, v.at("a") * v.at("b")); }, {{"a", a}, {"b", b}}},
      {"add_bias", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, ad::add_bias(v.at("a"), v.at("c"))); }, {{"a", a}, {"c", bias}}},
      {"relu", [&](Graph& g, const ParamSet& p) { return project(g, ad::relu(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"tanh", [&](Graph& g, const ParamSet& p) { return project(g, ad::tanh(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"exp", [&](Graph& g, const ParamSet& p) { return project(g, ad::exp(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"log", [&](Graph& g, const ParamSet& p) { return project(g, ad::log(g.param("a", p.at("a")))); }, {{"a", pos}}},
      {"softmax", [&](Graph& g, const ParamSet& p) { return project(g, ad::softmax(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"mean", [&](Graph& g, const ParamSet& p) { return ad::mean(ad::tanh(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"l2_norm", [&](Graph& g, const ParamSet& p) { return ad::l2_norm(g.param("a", p.at("a"))); }, {{"a", a}}},
      {"scale", [&](Graph& g, const ParamSet& p) { return project(g, ad::scale(g.param("a", p.at("a")), -2.5)); }, {{"a", a}}},
      {"scale_by", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, ad::scale_by(ad::index(v.at("v"), 2), v.at("a"))); }, {{"a", a}, {"v", vec}}},
      {"concat_cols", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, ad::concat_cols({v.at("a"), v.at("b")})); }, {{"a", a}, {"b", b}}},
      {"slice_rows", [&](Graph& g, const ParamSet& p) { return project(g, ad::slice_rows(g.param("a", p.at("a")), 1, 3)); }, {{"a", a}}},
      {"dot", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return ad::dot(v.at("v"), v.at("c")); }, {{"v", vec}, {"c", bias}}},
      {"row_dot", [&](Graph& g, const ParamSet& p) { auto v = g.bind(p); return project(g, ad::row_dot(v.at("a"), v.at("b"))); }, {{"a", a}, {"b", b}}},
      {"normalize_rows", [&](Graph& g, const ParamSet& p) { return project(g, ad::normalize_rows(g.param("a", p.at("a")))); }, {{"a", a}}},
      {"resize_cols pad", [&](Graph& g, const ParamSet& p) { return project(g, ad::resize_cols(g.param("a", p.at("a")), 6)); }, {{"a", a}}},
      {"resize_cols truncate", [&](Graph& g, const ParamSet& p) { return project(g, ad::resize_cols(g.param("a", p.at("a")), 2)); }, {{"a", a}}},
      {"cross_entropy", [&](Graph& g, const ParamSet& p) { return ad::cross_entropy(g.param("a", p.at("a")), labels); }, {{"a", a}}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(ad::grad_check(c.fn, c.point, 1e-5) < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  const ParamSet p = two_layer_point(5);
  const double a = 0.7, b = -1.3;
  auto grads_of = [&](auto build) {
    Graph g;
    return g.backward(build(g)).named();
  };
  auto f = [&](Graph& g) { return ad::sum(two_layer(g, p)); };
  auto h = [&](Graph& g) {
    Var y = two_layer(g, p);
    return ad::sum(y * y);
  };
  const auto gf = grads_of(f);
  const auto gh = grads_of(h);
  const auto gc = grads_of([&](Graph& g) {
    Var y = two_layer(g, p);
    return ad::scale(ad::sum(y), a) + ad::scale(ad::sum(y * y), b);
  });
  for (const auto& [name, t] : gc) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(std::abs(t[i] - (a * gf.at(name)[i] + b * gh.at(name)[i])) < 1e-10);
    }
  }
}

TEST_CASE("equal inputs give bitwise equal forward and backward") {
  const ParamSet p = two_layer_point(8);
  Graph g1, g2;
  Var l1 = ad::sum(two_layer(g1, p));
  Var l2 = ad::sum(two_layer(g2, p));
  CHECK(l1.value() == l2.value());
  const auto a = g1.backward(l1).named();
  const auto b = g2.backward(l2).named();
  for (const auto& [name, t] : a) CHECK(t == b.at(name));
}

TEST_CASE("gradient reaches inputs marked as needing one") {
  Graph g;
  Tensor x = Tensor::vector({1, 2, 3});
  Var xv = g.input(x.set_requires_grad());
  Var w = g.param("w", Tensor::vector({4, 5, 6}));
  const auto grads = g.backward(ad::dot(xv, w));
  CHECK(grads.wrt(xv) == Tensor::vector({4, 5, 6}));
  CHECK(grads["w"] == Tensor::vector({1, 2, 3}));
}

TEST_CASE("error states") {
  Graph g;
  Var v = g.param("v", Tensor::vector({1, 2}));
  CHECK_THROWS_AS(g.backward(v), ShapeError);
  CHECK_THROWS_AS(g.param("v", Tensor::vector({1})), std::invalid_argument);
  CHECK_THROWS_AS(ad::log(g.constant(Tensor::vector({-1.0}))), NumericError);
  CHECK_THROWS_AS(ad::exp(g.constant(Tensor::vector({1000.0}))), NumericError);
  CHECK_THROWS_AS(v + g.constant(Tensor::vector({1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(ad::matmul(g.constant(Tensor::matrix(1, 2, {1, 2})), g.constant(Tensor::matrix(3, 1, {1, 2, 3}))), ShapeError);
  Graph other;
  Var foreign = ad::sum(other.param("u", Tensor::vector({1})));
  CHECK_THROWS_AS(g.backward(foreign), std::logic_error);
  CHECK_THROWS_AS(g.backward(Var{}), std::logic_error);
  CHECK_THROWS_AS(ad::normalize_rows(g.constant(Tensor::matrix(1, 2, {0, 0}))), NumericError);
}

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
#include <vector>

#include "doctest.h"
#include "ssvfnas/nas_optim.hpp"

using namespace ssvfnas;
using namespace ssvfnas::nas;

namespace {

// Scalar model with l_trn = (w - a)^2 on rows below 100 and l_val = (w - 2a)^2 on
// rows from 100 upward. Gradients are written out by hand.
class QuadraticModel : public SearchModel {
 public:
  Tensor w = Tensor::vector({1.0});
  Tensor a = Tensor::vector({0.0});
  std::uint64_t count = 0;

  ExchangeResult exchange(const ExchangeSpec& spec) override {
    ++count;
    const double W = w[0], A = a[0];
    auto loss = [&](std::span<const std::size_t> rows) { return rows.front() < 100 ? (W - A) * (W - A) : (W - 2 * A) * (W - 2 * A); };
    auto dw = [&](std::span<const std::size_t> rows) { return rows.front() < 100 ? 2 * (W - A) : 2 * (W - 2 * A); };
    auto da = [&](std::span<const std::size_t> rows) { return rows.front() < 100 ? -2 * (W - A) : -4 * (W - 2 * A); };
    ExchangeResult r;
    r.primary_loss = loss(spec.primary);
    double gw = dw(spec.primary), ga = da(spec.primary);
    if (!spec.secondary.empty()) {
      r.secondary_loss = loss(spec.secondary);
      ga += spec.secondary_weight * da(spec.secondary);
    }
    if (spec.want_weights) r.weight_grads["w"] = Tensor::vector({gw});
    if (spec.want_arch) r.arch_grads["a"] = Tensor::vector({ga});
    return r;
  }
  std::vector<ParamRef> params(ParamGroup group) override {
    if (group == ParamGroup::weights) return {{"w", &w}};
    return {{"a", &a}};
  }
  std::uint64_t rounds() const override { return count; }
};

OptimConfig plain(double lr_w, double lr_a, double lambda) {
  OptimConfig c;
  c.weights = {lr_w, 0.0};
  c.arch = {lr_a, 0.0};
  c.lambda = lambda;
  return c;
}

const std::vector<std::size_t> kTrain{0, 1, 2};
const std::vector<std::size_t> kVal{100, 101};

}  // namespace

TEST_CASE("sgd without momentum takes one plain step") {
  Tensor p = Tensor::vector({1.0}), buf;
  sgd_update(p, Tensor::vector({2.0}), buf, {0.1, 0.0});
  CHECK(p[0] == doctest::Approx(0.8));
}

TEST_CASE("zero gradient leaves the parameter unchanged") {
  Tensor p = Tensor::vector({1.5, -2}), buf;
  sgd_update(p, Tensor::vector({0, 0}), buf, {0.1, 0.9});
  CHECK(p == Tensor::vector({1.5, -2}));
}

TEST_CASE("momentum accumulates over two steps") {
  Sgd opt({0.1, 0.9});
  Tensor p = Tensor::vector({0.0});
  opt.step("p", p, Tensor::vector({1.0}));
  CHECK(p[0] == doctest::Approx(-0.1));
  opt.step("p", p, Tensor::vector({1.0}));
  CHECK(p[0] == doctest::Approx(-0.29));
}

TEST_CASE("sgd rejects a gradient of the wrong shape") {
  Sgd opt({0.1, 0.0});
  Tensor p = Tensor::vector({0.0, 1.0});
  CHECK_THROWS_AS(opt.step("p", p, Tensor::vector({1.0})), ShapeError);
}

TEST_CASE("bilevel step on the scalar quadratics") {
  QuadraticModel m;
  NasOptimizer opt(plain(0.1, 0.1, 1.0));
  const StepReport r = bilevel_step(m, opt, kTrain, kVal);
  CHECK(m.a[0] == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(m.w[0] == doctest::Approx(0.88).epsilon(1e-14));
  CHECK(r.rounds_used == 2);
  CHECK(m.rounds() == 2);
}

TEST_CASE("mixlevel step on the scalar quadratics") {
  QuadraticModel m;
  NasOptimizer opt(plain(0.1, 0.1, 1.0));
  const StepReport r = mixlevel_step(m, opt, kTrain, kVal);
  CHECK(m.a[0] == doctest::Approx(0.6).epsilon(1e-14));
  // Weights use the training loss at the pre-step point: 1 - 0.1 * 2.
  CHECK(m.w[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(r.rounds_used == 1);
}

TEST_CASE("mixlevel with lambda zero uses only the training gradient for alpha") {
  QuadraticModel m;
  NasOptimizer opt(plain(0.1, 0.1, 0.0));
  mixlevel_step(m, opt, kTrain, kVal);
  CHECK(m.a[0] == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("equal iteration budgets cost twice the rounds under bilevel") {
  QuadraticModel bi, mix;
  NasOptimizer ob(plain(0.01, 0.01, 1.0)), om(plain(0.01, 0.01, 1.0));
  for (int i = 0; i < 37; ++i) {
    bilevel_step(bi, ob, kTrain, kVal);
    mixlevel_step(mix, om, kTrain, kVal);
  }
  CHECK(bi.rounds() == 74);
  CHECK(mix.rounds() == 37);
}

TEST_CASE("zero arch learning rate keeps alpha bitwise constant") {
  QuadraticModel bi, mix;
  bi.a[0] = mix.a[0] = 0.123456789;
  NasOptimizer ob(plain(0.05, 0.0, 1.0)), om(plain(0.05, 0.0, 3.0));
  for (int i = 0; i < 20; ++i) {
    bilevel_step(bi, ob, kTrain, kVal);
    mixlevel_step(mix, om, kTrain, kVal);
  }
  CHECK(bi.a[0] == 0.123456789);
  CHECK(mix.a[0] == 0.123456789);
}

TEST_CASE("mixlevel weight update equals the bilevel weight sub-step at lambda zero") {
  QuadraticModel bi, mix;
  NasOptimizer ob(plain(0.1, 0.0, 1.0)), om(plain(0.1, 0.0, 0.0));
  bilevel_step(bi, ob, kTrain, kVal);
  mixlevel_step(mix, om, kTrain, kVal);
  CHECK(bi.w == mix.w);
}

TEST_CASE("weight step uses one round and leaves alpha alone") {
  QuadraticModel m;
  NasOptimizer opt(plain(0.1, 0.1, 1.0));
  const StepReport r = weight_step(m, opt, kTrain);
  CHECK(r.rounds_used == 1);
  CHECK(m.a[0] == 0.0);
  CHECK(m.w[0] == doctest::Approx(0.8));
}

TEST_CASE("invalid batches are rejected") {
  QuadraticModel m;
  NasOptimizer opt(plain(0.1, 0.1, 1.0));
  const std::vector<std::size_t> empty, overlap{2, 100};
  CHECK_THROWS_AS(bilevel_step(m, opt, empty, kVal), std::invalid_argument);
  CHECK_THROWS_AS(mixlevel_step(m, opt, kTrain, empty), std::invalid_argument);
  CHECK_THROWS_AS(bilevel_step(m, opt, kTrain, overlap), std::invalid_argument);
  CHECK_THROWS_AS(weight_step(m, opt, empty), std::invalid_argument);
  CHECK(m.rounds() == 0);
}

TEST_CASE("optimizer config validation") {
  OptimConfig c;
  CHECK_NOTHROW(c.validate());
  c.weights.lr = -1;
  CHECK_THROWS(c.validate());
  c = OptimConfig{};
  c.lambda = -0.5;
  CHECK_THROWS(c.validate());
}

TEST_CASE("gradient norm") {
  CHECK(grad_norm({{"a", Tensor::vector({3})}, {"b", Tensor::vector({4})}}) == doctest::Approx(5.0));
  CHECK(grad_norm({}) == 0.0);
}

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
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ssvfnas/data.hpp"
#include "ssvfnas/ssl_pretrain.hpp"

using namespace ssvfnas;
using namespace ssvfnas::ssl;

namespace {

Tensor unit_rows(std::size_t r, std::size_t c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t(Shape{r, c});
  for (double& v : t.data()) v = d(rng);
  for (std::size_t i = 0; i < r; ++i) {
    double n = 0;
    for (std::size_t j = 0; j < c; ++j) n += t.at(i, j) * t.at(i, j);
    n = std::sqrt(n);
    for (std::size_t j = 0; j < c; ++j) t.at(i, j) /= n;
  }
  return t;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  return {t.data().begin() + r * t.cols(), t.data().begin() + (r + 1) * t.cols()};
}

struct Party {
  nas::Supernet net;
  nas::ArchParams arch;
  Tensor shard;
};

Party blob_party(std::uint64_t seed) {
  const auto ds = data::generate_blobs(2, data::PopulationSpec{}, seed);
  auto [net, arch] = nas::Supernet::build(3, 32, 8, 64, nas::OpSet::defaults(), seed + 100);
  return {std::move(net), std::move(arch), ds.shards[0].gather_rows(ds.pretrain_rows())};
}

MocoConfig small_config() {
  MocoConfig c;
  c.queue = 256;
  return c;
}

}  // namespace

TEST_CASE("degenerate augmentation policies") {
  std::mt19937_64 rng(1);
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  auto [a, b] = augment(x, {0.0, 0.0}, rng);
  CHECK(a == x);
  CHECK(b == x);
  auto [c, d] = augment(x, {0.5, 1.0}, rng);
  CHECK(c == Tensor(x.shape(), 0.0));
  CHECK(d == Tensor(x.shape(), 0.0));
}

TEST_CASE("jitter of 0.1 has mean squared deviation 0.01") {
  std::mt19937_64 rng(2);
  const Tensor x(Shape{1000, 100}, 1.0);
  auto [a, b] = augment(x, {0.1, 0.0}, rng);
  for (const Tensor* v : {&a, &b}) {
    double sq = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += ((*v)[i] - x[i]) * ((*v)[i] - x[i]);
    CHECK(sq / x.size() == doctest::Approx(0.01).epsilon(0.05));
  }
  CHECK_FALSE(a == b);
}

TEST_CASE("positive against one orthogonal key at unit temperature") {
  const std::vector<double> q{1, 0}, k{0, 1};
  CHECK(info_nce(q, q, {k}, 1.0) == doctest::Approx(0.31326).epsilon(1e-5));
  CHECK(info_nce(q, q, {k}, 1.0) == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));
}

TEST_CASE("an empty queue costs exactly zero") {
  const std::vector<double> q{0.6, 0.8};
  CHECK(info_nce(q, q, {}, 0.2) == 0.0);
  ad::Graph g;
  const Tensor qs = unit_rows(4, 5, 1);
  CHECK(info_nce_loss(g.constant(qs), unit_rows(4, 5, 2), Tensor(Shape{0, 5}), 0.2).value().item() == 0.0);
}

TEST_CASE("loss falls as the positive similarity rises") {
  const std::vector<std::vector<double>> queue{{0, 1}, {-0.6, 0.8}};
  const std::vector<double> q{1, 0};
  double prev = INFINITY;
  for (double angle = 1.5; angle >= 0.0; angle -= 0.25) {
    const double l = info_nce(q, std::vector<double>{std::cos(angle), std::sin(angle)}, queue, 0.2);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("zero-norm inputs are rejected") {
  CHECK_THROWS_AS(info_nce(std::vector<double>{0, 0}, std::vector<double>{1, 0}, {}, 1.0), NumericError);
}

TEST_CASE("batched loss equals the mean of the direct evaluation") {
  const Tensor q = unit_rows(6, 8, 3), k = unit_rows(6, 8, 4), queue = unit_rows(20, 8, 5);
  std::vector<std::vector<double>> qrows;
  for (std::size_t i = 0; i < 20; ++i) qrows.push_back(row_of(queue, i));
  double direct = 0;
  for (std::size_t i = 0; i < 6; ++i) direct += info_nce(row_of(q, i), row_of(k, i), qrows, 0.2);
  direct /= 6;
  ad::Graph g;
  const double batched = info_nce_loss(g.constant(q), k, queue, 0.2).value().item();
  CHECK(std::abs(batched - direct) < 1e-10);
}

TEST_CASE("query path gradient matches central differences") {
  const Tensor k = unit_rows(5, 6, 7), queue = unit_rows(12, 6, 8);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d;
  Tensor raw(Shape{5, 6});
  for (double& v : raw.data()) v = d(rng);
  auto loss = [&](ad::Graph& g, const ad::ParamSet& p) {
    return info_nce_loss(ad::normalize_rows(g.param("q", p.at("q"))), k, queue, 0.2);
  };
  CHECK(ad::grad_check(loss, {{"q", raw}}, 1e-6) < 1e-4);
}

TEST_CASE("momentum update fixed points and midpoint") {
  const Tensor q = Tensor::vector({0.1, 0.7, -3});
  Tensor k = Tensor::vector({5, -2, 1e-3});
  const Tensor k0 = k;
  momentum_update(k, q, 1.0);
  CHECK(k == k0);
  momentum_update(k, q, 0.0);
  CHECK(k == q);
  Tensor z = Tensor::vector({0.0});
  momentum_update(z, Tensor::vector({2.0}), 0.5);
  CHECK(z[0] == 1.0);
  CHECK_THROWS_AS(momentum_update(k, Tensor::vector({1}), 0.5), ShapeError);
  CHECK_THROWS(momentum_update(k, q, 1.5));
}

TEST_CASE("queue never exceeds its capacity and evicts the oldest") {
  KeyQueue queue(10);
  for (unsigned i = 0; i < 7; ++i) {
    queue.push(unit_rows(3, 4, i));
    CHECK(queue.size() == std::min<std::size_t>(10, 3 * (i + 1)));
  }
  CHECK(queue.size() == 10);
  const Tensor last = unit_rows(3, 4, 6);
  const Tensor m = queue.matrix();
  CHECK(m.rows() == 10);
  for (std::size_t j = 0; j < 4; ++j) CHECK(m.at(9, j) == last.at(2, j));
  CHECK(KeyQueue(4).matrix().size() == 0);
}

TEST_CASE("key encoder starts as a copy and its pass leaves parameters alone") {
  Party p = blob_party(1);
  MocoState state(p.net, p.arch, small_config(), 3);
  for (const auto& [name, t] : p.net.weights()) CHECK(state.net_k.at(name) == t);
  CHECK(state.alpha_k == p.arch.alpha);
  CHECK(state.head_k.size() == state.head_q.size());
  const auto before = p.net.weights();
  const Tensor keys = state.keys(p.net, p.shard.gather_rows(std::vector<std::size_t>{0, 1, 2}));
  CHECK(keys.rows() == 3);
  CHECK(keys.cols() == 32);
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0;
    for (std::size_t c = 0; c < 32; ++c) n += keys.at(r, c) * keys.at(r, c);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (const auto& [name, t] : before) CHECK(p.net.weights().at(name) == t);
}

TEST_CASE("zero epochs leave everything bitwise unchanged") {
  Party p = blob_party(2);
  const auto w0 = p.net.weights();
  const Tensor a0 = p.arch.alpha;
  MocoState state(p.net, p.arch, small_config(), 4);
  std::mt19937_64 rng(5);
  const auto r = pretrain_party(p.net, p.arch, state, p.shard, 0, rng);
  CHECK(r.loss_history.empty());
  CHECK(p.arch.alpha == a0);
  for (const auto& [name, t] : w0) CHECK(p.net.weights().at(name) == t);
  CHECK(state.queue.size() == 0);
}

TEST_CASE("empty shard is rejected") {
  Party p = blob_party(3);
  MocoState state(p.net, p.arch, small_config(), 4);
  std::mt19937_64 rng(5);
  CHECK_THROWS(pretrain_party(p.net, p.arch, state, Tensor(Shape{0, 8}), 1, rng));
}

TEST_CASE("pretraining lowers the loss and updates both weights and alpha") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    Party p = blob_party(seed);
    const Tensor a0 = p.arch.alpha;
    MocoState state(p.net, p.arch, MocoConfig{}, seed + 7);
    std::mt19937_64 rng(seed + 11);
    const auto r = pretrain_party(p.net, p.arch, state, p.shard, 3, rng);
    REQUIRE(r.loss_history.size() >= 20);
    for (double l : r.loss_history) CHECK(std::isfinite(l));
    const auto& h = r.loss_history;
    const double head = std::accumulate(h.begin(), h.begin() + 10, 0.0) / 10;
    const double tail = std::accumulate(h.end() - 10, h.end(), 0.0) / 10;
    CHECK(tail < head);
    CHECK_FALSE(p.arch.alpha == a0);
    CHECK(state.queue.size() == 1024);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  Party p = blob_party(4);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  for (double& v : p.arch.alpha.data()) v = d(rng);
  const auto dir = std::filesystem::temp_directory_path() / "ssvfnas_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "party1", p.net, p.arch, {{"party", 1}});
  auto [net2, arch2] = nas::Supernet::build(3, 32, 8, 64, nas::OpSet::defaults(), 999);
  load_checkpoint(dir / "party1", net2, arch2);
  CHECK(arch2.alpha == p.arch.alpha);
  for (const auto& [name, t] : p.net.weights()) CHECK(net2.weights().at(name) == t);
  auto [small, small_arch] = nas::Supernet::build(2, 32, 8, 64, nas::OpSet::defaults(), 1);
  CHECK_THROWS(load_checkpoint(dir / "party1", small, small_arch));
  std::filesystem::remove_all(dir);
}

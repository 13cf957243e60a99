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

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <cmath>
#include <random>

#include "doctest.h"
#include "ssvfnas/dp.hpp"

using namespace ssvfnas;
using namespace ssvfnas::dp;

namespace {

using HighPrec = boost::multiprecision::cpp_dec_float_50;

double hp_sigma(double eps, double delta) {
  const HighPrec d(delta);
  return static_cast<double>(sqrt(HighPrec(2) * log(HighPrec(1.25) / d)) / HighPrec(eps));
}

double hp_epsilon_prime(double eps, std::uint64_t steps, double slack) {
  const HighPrec e(eps), t(steps);
  return static_cast<double>(sqrt(HighPrec(2) * t * log(HighPrec(1) / HighPrec(slack))) * e +
                             t * e * (exp(e) - HighPrec(1)));
}

Tensor gaussian_tensor(std::size_t n, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(Shape{n});
  for (double& v : t.data()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("noise scale for epsilon 1 and delta 1e-5") {
  CHECK(std::abs(sigma_for(1.0, 1e-5) - 4.84481) < 1e-4);
  CHECK(std::abs(sigma_for(1.0, 1e-5) - hp_sigma(1.0, 1e-5)) < 1e-12);
}

TEST_CASE("noise scale agrees with a high-precision evaluation on a grid") {
  for (double eps : {0.05, 0.5, 2.0, 8.0})
    for (double delta : {1e-9, 1e-7, 1e-3, 0.5}) {
      CHECK(sigma_for(eps, delta) == doctest::Approx(hp_sigma(eps, delta)).epsilon(1e-13));
      CHECK(epsilon_for(sigma_for(eps, delta), delta) == doctest::Approx(eps).epsilon(1e-13));
    }
}

TEST_CASE("composition over 100 steps") {
  const Composed c = compose(0.1, 1e-7, 100, 1e-5);
  CHECK(std::abs(c.epsilon_prime - 5.8502) < 1e-3);
  CHECK(c.epsilon_prime == doctest::Approx(hp_epsilon_prime(0.1, 100, 1e-5)).epsilon(1e-13));
  CHECK(c.delta_total == 100 * 1e-7 + 1e-5);
  CHECK(c.delta_total == doctest::Approx(2e-5).epsilon(1e-15));
}

TEST_CASE("composition is monotone in the number of steps") {
  double prev = 0.0;
  for (std::uint64_t t = 1; t <= 4096; t *= 2) {
    const double e = compose(0.05, 1e-7, t, 1e-5).epsilon_prime;
    CHECK(e > prev);
    CHECK(e == doctest::Approx(hp_epsilon_prime(0.05, t, 1e-5)).epsilon(1e-12));
    prev = e;
  }
}

TEST_CASE("invalid mechanism parameters are rejected") {
  CHECK_THROWS(sigma_for(0.0, 1e-5));
  CHECK_THROWS(sigma_for(1.0, 0.0));
  CHECK_THROWS(sigma_for(1.0, 1.0));
  CHECK_THROWS(compose(0.1, 1e-7, 100, 0.0));
  std::mt19937_64 rng(1);
  CHECK_THROWS(clip_and_noise(Tensor::vector({1}), 0.0, 1.0, rng));
  CHECK_THROWS(clip_and_noise(Tensor::vector({1}), 1.0, -1.0, rng));
}

TEST_CASE("without noise the output lies in the clip ball") {
  std::mt19937_64 rng(2);
  for (unsigned s = 0; s < 50; ++s) {
    const Tensor v = gaussian_tensor(37, 0.1 + s, s);
    const Tensor out = clip_and_noise(v, 1.5, 0.0, rng);
    CHECK(out.l2_norm() <= 1.5 * (1 + 1e-12));
  }
}

TEST_CASE("vectors inside the ball pass through unchanged") {
  std::mt19937_64 rng(3);
  const Tensor v = Tensor::vector({0.3, -0.4});
  CHECK(clip_and_noise(v, 1.0, 0.0, rng) == v);
}

TEST_CASE("clipping preserves direction") {
  std::mt19937_64 rng(4);
  const Tensor out = clip_and_noise(Tensor::vector({30, -40}), 2.0, 0.0, rng);
  CHECK(out[0] == doctest::Approx(1.2));
  CHECK(out[1] == doctest::Approx(-1.6));
}

TEST_CASE("added noise has standard deviation sigma times clip") {
  std::mt19937_64 rng(5);
  const std::size_t n = 200000;
  const Tensor zero(Shape{n}, 0.0);
  const double clip = 0.5, sigma = 3.0;
  const Tensor out = clip_and_noise(zero, clip, sigma, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : out.data()) mean += v;
  mean /= n;
  for (double v : out.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (n - 1));
  CHECK(std::abs(mean) < 0.02);
  CHECK(sd == doctest::Approx(sigma * clip).epsilon(0.01));
}

TEST_CASE("equal seeds give equal noise") {
  std::mt19937_64 a(6), b(6);
  const Tensor v = gaussian_tensor(10, 1.0, 1);
  CHECK(clip_and_noise(v, 1.0, 2.0, a) == clip_and_noise(v, 1.0, 2.0, b));
}

TEST_CASE("ledger composes each party and direction separately") {
  PrivacyLedger ledger;
  const double sigma = sigma_for(0.1, 1e-7);
  for (std::uint64_t t = 0; t < 100; ++t) {
    ledger.record(1, Direction::forward, sigma, 1.0, t);
    ledger.record(1, Direction::backward, sigma, 1.0, t);
  }
  for (std::uint64_t t = 0; t < 10; ++t) ledger.record(2, Direction::forward, sigma, 1.0, t);
  CHECK(ledger.total_entries() == 210);
  const auto rows = ledger_report(ledger, 1e-7, 1e-5);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    REQUIRE(r.epsilon_prime.has_value());
    CHECK(*r.epsilon_prime == doctest::Approx(hp_epsilon_prime(0.1, r.steps, 1e-5)).epsilon(1e-9));
    CHECK(r.delta_total == doctest::Approx(r.steps * 1e-7 + 1e-5));
  }
  CHECK(rows[0].steps == 100);
  CHECK(rows[2].steps == 10);
}

TEST_CASE("empty ledger costs nothing and zero noise is unbounded") {
  const PrivacyReportRow empty = ledger_report_one({}, 1e-7, 1e-5);
  REQUIRE(empty.epsilon_prime.has_value());
  CHECK(*empty.epsilon_prime == 0.0);
  CHECK(empty.delta_total == 1e-5);
  const PrivacyReportRow open = ledger_report_one({{0.0, 1.0, 0}}, 1e-7, 1e-5);
  CHECK_FALSE(open.epsilon_prime.has_value());
  CHECK(to_json({open})[0]["epsilon_prime"].is_null());
}

TEST_CASE("mixed noise scales in one direction are rejected") {
  CHECK_THROWS(ledger_report_one({{1.0, 1.0, 0}, {2.0, 1.0, 1}}, 1e-7, 1e-5));
}

TEST_CASE("config validation") {
  DpConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip_forward = 0;
  CHECK_THROWS(c.validate());
  c = DpConfig{};
  c.sigma_backward = -1;
  CHECK_THROWS(c.validate());
}

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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ssvfnas/report.hpp"
#include "ssvfnas/runner.hpp"

using namespace ssvfnas;
using namespace ssvfnas::run;

namespace {

ExperimentConfig tiny(Algorithm a, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.algorithm = a;
  c.seed = seed;
  c.population.samples = 240;
  c.population.classes = 4;
  c.pretrain_epochs = 1;
  c.search_epochs = 2;
  c.evaluate_epochs = 1;
  c.eval_every = 2;
  c.federation.hidden = 8;
  c.federation.embed_dim = 8;
  c.federation.head_hidden = {16, 8};
  c.federation.moco.queue = 64;
  c.federation.moco.head = {8, 4};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ssvfnas_runner_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("convergence after six non-improving evaluations") {
  const std::vector<double> h{0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
  CHECK(detect_convergence(h) == std::optional<std::size_t>{1});
}

TEST_CASE("a strictly increasing history never converges") {
  const std::vector<double> h{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  CHECK_FALSE(detect_convergence(h).has_value());
  CHECK_FALSE(detect_convergence(std::vector<double>{}).has_value());
}

TEST_CASE("an improvement at the fifth follower resets the window") {
  const std::vector<double> reset{0.5, 0.4, 0.4, 0.4, 0.4, 0.7, 0.6, 0.6, 0.6, 0.6, 0.6};
  CHECK_FALSE(detect_convergence(reset).has_value());
  std::vector<double> longer = reset;
  longer.push_back(0.6);
  CHECK(detect_convergence(longer) == std::optional<std::size_t>{5});
  const std::vector<double> five{0.5, 0.4, 0.4, 0.4, 0.4, 0.4};
  CHECK_FALSE(detect_convergence(five).has_value());
}

TEST_CASE("local-only search communicates nothing") {
  const RunReport r = run_experiment(tiny(Algorithm::ssnas_local));
  CHECK(r.rounds == 0);
  CHECK(r.eval_rounds == 0);
  CHECK(r.retrain_rounds == 0);
  CHECK(r.bytes == 0);
  CHECK(r.test_accuracy.has_value());
}

TEST_CASE("pre-search contributes no rounds") {
  ExperimentConfig c = tiny(Algorithm::ss_vfnas2);
  const RunReport r = run_search(c);
  CHECK(r.pretrain_rounds == 0);
  CHECK(r.rounds == r.iterations);
  CHECK(r.pretrain_loss.size() == 2);
  CHECK_FALSE(r.pretrain_loss[0].empty());
}

TEST_CASE("self-supervised mixlevel equals plain mixlevel without pre-search") {
  ExperimentConfig ss = tiny(Algorithm::ss_vfnas2), plain = tiny(Algorithm::vfnas2);
  ss.pretrain_epochs = plain.pretrain_epochs = 0;
  const RunReport a = run_search(ss), b = run_search(plain);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    CHECK(a.metrics[i].val_accuracy == b.metrics[i].val_accuracy);
  }
  CHECK(a.transcript_hash == b.transcript_hash);
  CHECK(a.archs == b.archs);
}

TEST_CASE("end-to-end with zero info weight equals plain mixlevel") {
  ExperimentConfig e2e = tiny(Algorithm::vfnas_e2e), plain = tiny(Algorithm::vfnas2);
  e2e.gamma = 0.0;
  const RunReport a = run_search(e2e), b = run_search(plain);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    CHECK(a.metrics[i].info_loss == 0.0);
  }
  CHECK(a.rounds == a.iterations);
}

TEST_CASE("bilevel costs exactly twice the rounds of mixlevel") {
  const RunReport bi = run_search(tiny(Algorithm::vfnas1)), mix = run_search(tiny(Algorithm::vfnas2));
  REQUIRE(bi.iterations == mix.iterations);
  CHECK(bi.rounds == 2 * mix.rounds);
  CHECK(mix.rounds == mix.iterations);
}

TEST_CASE("rounds and bytes never decrease") {
  const RunReport r = run_search(tiny(Algorithm::vfnas1));
  for (std::size_t i = 1; i < r.metrics.size(); ++i) {
    CHECK(r.metrics[i].rounds >= r.metrics[i - 1].rounds);
    CHECK(r.metrics[i].bytes >= r.metrics[i - 1].bytes);
  }
}

TEST_CASE("config validation and strict parsing") {
  ExperimentConfig c = tiny(Algorithm::vfnas2);
  CHECK_NOTHROW(c.validate());
  c.seed.reset();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(Algorithm::vfnas2);
  c.overlap = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(Algorithm::vfnas2);
  c.parties = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny(Algorithm::vfnas2);
  c.split = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_algorithm("darts"), ConfigError);

  const auto good = tiny(Algorithm::ss_vfnas1).to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(good);
  CHECK(back.to_json() == good);
  auto bad = good;
  bad["learning_rate"] = 0.1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = good;
  bad["dp"]["sigma"] = 1.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
}

TEST_CASE("sweep points cover every value and seed and are order independent") {
  ExperimentConfig base = tiny(Algorithm::vfnas2);
  base.search_epochs = 1;
  const auto points = sweep(base, SweepAxis::dp_sigma, {0, 1, 3, 10}, {1, 2, 3});
  CHECK(points.size() == 12);
  const auto reversed = sweep(base, SweepAxis::dp_sigma, {10, 3, 1, 0}, {3, 2, 1});
  for (const auto& p : points) {
    bool found = false;
    for (const auto& q : reversed) {
      if (q.value == p.value && q.seed == p.seed) {
        found = true;
        CHECK(q.report.to_json() == p.report.to_json());
      }
    }
    CHECK(found);
  }
  const auto summary = summarize(points);
  CHECK(summary.size() == 4);
  CHECK(summary[0]["runs"] == 3);
  const ExperimentConfig noisy = apply_axis(base, SweepAxis::dp_sigma, 3);
  CHECK(noisy.federation.dp.enabled);
  CHECK(noisy.federation.dp.sigma_forward == 3.0);
  CHECK(noisy.federation.dp.sigma_backward == 3.0);
}

TEST_CASE("the party axis reuses one population") {
  ExperimentConfig base = tiny(Algorithm::vfnas2);
  const auto two = prepare_dataset(apply_axis(base, SweepAxis::parties, 2));
  const auto three = prepare_dataset(apply_axis(base, SweepAxis::parties, 3));
  CHECK(two.shards[0] == three.shards[0]);
  CHECK(two.shards[1] == three.shards[1]);
  CHECK(two.splits.test == three.splits.test);
}

TEST_CASE("an empty report list gives a header-only csv") {
  CHECK(report::metrics_csv({}) == std::string(report::kMetricsHeader) + "\n");
}

TEST_CASE("reports are deterministic and complete") {
  const RunReport a = run_experiment(tiny(Algorithm::ss_vfnas2, 4));
  const RunReport b = run_experiment(tiny(Algorithm::ss_vfnas2, 4));
  const auto da = scratch("a"), db = scratch("b");
  report::emit_report({a}, da);
  report::emit_report({b}, db);
  for (const char* f : {"run.json", "metrics.csv", "arch_party1.json", "arch_party2.json", "privacy.json"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(da / f));
    CHECK(slurp(da / f) == slurp(db / f));
  }
  CHECK(std::filesystem::exists(da / "timing.json"));
  const std::string first = slurp(da / "run.json");
  report::emit_report({a}, da);
  CHECK(slurp(da / "run.json") == first);

  std::istringstream csv(slurp(da / "metrics.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  CHECK(line == report::kMetricsHeader);
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == a.iterations);
  std::filesystem::remove_all(da);
  std::filesystem::remove_all(db);
}

TEST_CASE("several runs get run-indexed files") {
  const RunReport a = run_search(tiny(Algorithm::vfnas2, 1));
  const RunReport b = run_search(tiny(Algorithm::vfnas2, 2));
  const auto dir = scratch("multi");
  report::emit_report({a, b}, dir);
  CHECK(report::read_json(dir / "run.json").is_array());
  CHECK(std::filesystem::exists(dir / "arch_run1_party2.json"));
  std::filesystem::remove_all(dir);
}

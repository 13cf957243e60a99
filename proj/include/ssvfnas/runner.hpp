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

#ifndef SSVFNAS_RUNNER_HPP
#define SSVFNAS_RUNNER_HPP

// Experiment pipelines: optional self-supervised pre-search, federated search, discretization,
// retraining of the fixed architectures and test evaluation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssvfnas/data.hpp"
#include "ssvfnas/dp.hpp"
#include "ssvfnas/federation.hpp"
#include "ssvfnas/nas_optim.hpp"
#include "ssvfnas/search_space.hpp"

namespace ssvfnas::run {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Algorithm { ssnas_local, vfnas1, vfnas2, ss_vfnas1, ss_vfnas2, vfnas_e2e };

const char* algorithm_name(Algorithm a) noexcept;
Algorithm parse_algorithm(const std::string& name);
bool uses_pretrain(Algorithm a) noexcept;
bool uses_bilevel(Algorithm a) noexcept;

enum class RetrainInit { scratch, inherit };

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::vfnas2;
  std::size_t parties = 2;
  data::PopulationSpec population;
  double overlap = 1.0;
  std::array<double, 3> split{0.4, 0.4, 0.2};
  std::size_t pretrain_epochs = 10;
  std::size_t search_epochs = 20;
  /// Retraining budget; defaults to 3 x search_epochs.
  std::optional<std::size_t> evaluate_epochs;
  std::size_t batch = 32;
  std::size_t eval_every = 4;
  std::size_t eval_batch = 256;
  double gamma = 0.1;
  nas::OptimConfig optim;
  fed::FederationConfig federation;
  RetrainInit retrain_init = RetrainInit::scratch;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::uint64_t> seed;

  std::size_t retrain_epochs() const { return evaluate_epochs.value_or(3 * search_epochs); }
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct IterationMetrics {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double info_loss = 0.0;
  std::optional<double> val_accuracy;
  std::uint64_t rounds = 0;
  std::uint64_t bytes = 0;
};

struct RunReport {
  nlohmann::json config;
  std::vector<IterationMetrics> metrics;
  std::vector<std::vector<double>> pretrain_loss;  // per party
  std::uint64_t pretrain_rounds = 0;
  std::uint64_t rounds = 0;  // search rounds
  std::uint64_t eval_rounds = 0;
  std::uint64_t retrain_rounds = 0;
  std::uint64_t bytes = 0;
  std::size_t iterations = 0;
  std::optional<std::size_t> convergence_eval;
  std::size_t convergence_iteration = 0;
  std::uint64_t rounds_to_convergence = 0;
  std::optional<double> test_accuracy;
  std::vector<nas::DiscreteArch> archs;
  std::vector<dp::PrivacyReportRow> privacy;
  std::uint64_t transcript_hash = 0;  // search-phase transcript
  double wall_clock_seconds = 0.0;  // not serialized by to_json

  std::vector<double> val_history() const;
  nlohmann::json to_json() const;
};

/// Index of the best evaluation once more than `patience - 1` later evaluations fail to
/// beat it, i.e. at least `patience` non-improving followers.
std::optional<std::size_t> detect_convergence(std::span<const double> history,
                                              std::size_t patience = 6);

/// Dataset as the experiment sees it: generated (or loaded), overlapped and split.
data::VerticalDataset prepare_dataset(const ExperimentConfig& cfg);

/// Full pipeline.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Pipeline without retraining: pre-search and search only.
RunReport run_search(const ExperimentConfig& cfg);

/// Retrains the given architectures from fresh weights on train and validation, then tests.
RunReport run_evaluate(const ExperimentConfig& cfg, const std::vector<nas::DiscreteArch>& archs);

/// Reads arch_party<k>.json for every party of the configured experiment.
std::vector<nas::DiscreteArch> load_archs(const ExperimentConfig& cfg,
                                          const std::filesystem::path& dir);

/// Pre-search every party and write one checkpoint per party into `dir`.
std::vector<std::vector<double>> run_pretrain(const ExperimentConfig& cfg,
                                              const std::filesystem::path& dir);

enum class SweepAxis { dp_sigma, parties, overlap };

const char* axis_name(SweepAxis a) noexcept;
SweepAxis parse_axis(const std::string& name);
/// The config for one sweep point.
ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  std::uint64_t seed = 0;
  RunReport report;
};

std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis,
                              const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds);

/// Mean and sample standard deviation of test accuracy and rounds per axis value.
nlohmann::json summarize(const std::vector<SweepPoint>& points);

}  // namespace ssvfnas::run

#endif  // SSVFNAS_RUNNER_HPP

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

#ifndef SSVFNAS_DP_HPP
#define SSVFNAS_DP_HPP

// Gaussian mechanism on exchanged tensors and its (epsilon, delta) accounting.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "json.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::dp {

struct DpConfig {
  bool enabled = false;
  double clip_forward = 1.0;    // C1
  double sigma_forward = 0.0;   // sigma1
  double clip_backward = 1.0;   // C2
  double sigma_backward = 0.0;  // sigma2
  /// Also perturb forward-only evaluation exchanges (test-time inference).
  bool noise_at_eval = false;
  double delta_step = 1e-7;     // delta1
  double delta_slack = 1e-5;    // delta'

  void validate() const;
};

/// Scales v onto the L2 ball of radius C, then adds i.i.d. N(0, sigma^2 C^2).
Tensor clip_and_noise(const Tensor& v, double clip, double sigma, std::mt19937_64& rng);

/// Per-step noise scale for (epsilon, delta)-DP: sqrt(2 ln(1.25/delta)) / epsilon.
double sigma_for(double epsilon, double delta);

/// Inverse of sigma_for in epsilon.
double epsilon_for(double sigma, double delta);

struct Composed {
  double epsilon_prime = 0.0;
  double delta_total = 0.0;
};

/// Strong composition over T steps:
///   eps' = sqrt(2 T ln(1/delta')) eps1 + T eps1 (e^eps1 - 1),  delta = T delta1 + delta'.
Composed compose(double epsilon_step, double delta_step, std::uint64_t steps,
                 double delta_slack);

enum class Direction : std::uint8_t { forward, backward };

const char* direction_name(Direction d) noexcept;

struct LedgerEntry {
  double sigma = 0.0;
  double clip = 0.0;
  std::uint64_t step = 0;
};

struct PrivacyReportRow {
  std::uint16_t party = 0;
  Direction direction = Direction::forward;
  std::uint64_t steps = 0;
  double sigma = 0.0;
  /// Unbounded (no noise) is reported as nullopt.
  std::optional<double> epsilon_prime;
  double delta_total = 0.0;
};

/// Append-only record of every mechanism invocation, per party and direction.
class PrivacyLedger {
 public:
  void record(std::uint16_t party, Direction dir, double sigma, double clip, std::uint64_t step);
  const std::vector<LedgerEntry>& entries(std::uint16_t party, Direction dir) const;
  std::vector<std::pair<std::uint16_t, Direction>> keys() const;
  std::size_t total_entries() const noexcept;

 private:
  std::map<std::pair<std::uint16_t, Direction>, std::vector<LedgerEntry>> entries_;
};

/// Composed budget per (party, direction). Throws if a direction mixes sigmas.
std::vector<PrivacyReportRow> ledger_report(const PrivacyLedger& ledger, double delta_step,
                                            double delta_slack);

/// Budget for a single (party, direction) list; an empty list costs nothing.
PrivacyReportRow ledger_report_one(const std::vector<LedgerEntry>& entries, double delta_step,
                                   double delta_slack);

nlohmann::json to_json(const std::vector<PrivacyReportRow>& rows);

}  // namespace ssvfnas::dp

#endif  // SSVFNAS_DP_HPP

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

#include "ssvfnas/dp.hpp"

#include <cmath>
#include <stdexcept>

namespace ssvfnas::dp {

void DpConfig::validate() const {
  if (!(clip_forward > 0.0) || !(clip_backward > 0.0)) {
    throw std::invalid_argument("DP clip bounds must be > 0");
  }
  if (!(sigma_forward >= 0.0) || !(sigma_backward >= 0.0)) {
    throw std::invalid_argument("DP noise scales must be >= 0");
  }
  if (!(delta_step > 0.0 && delta_step < 1.0) || !(delta_slack > 0.0 && delta_slack < 1.0)) {
    throw std::invalid_argument("DP deltas must lie in (0, 1)");
  }
}

Tensor clip_and_noise(const Tensor& v, double clip, double sigma, std::mt19937_64& rng) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip_and_noise: clip bound must be > 0");
  if (!(sigma >= 0.0)) throw std::invalid_argument("clip_and_noise: sigma must be >= 0");
  if (!v.all_finite()) throw NumericError("clip_and_noise: non-finite input");
  const double factor = std::max(1.0, v.l2_norm() / clip);
  Tensor out = v;
  if (factor != 1.0) {
    for (double& x : out.data()) x /= factor;
  }
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma * clip);
    for (double& x : out.data()) x += noise(rng);
  }
  return out;
}

double sigma_for(double epsilon, double delta) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("sigma_for: epsilon must be positive and finite");
  }
  // delta >= 1.25 would make the log non-positive; the mechanism needs delta < 1.
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("sigma_for: delta must be in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

double epsilon_for(double sigma, double delta) {
  if (!(sigma > 0.0)) throw std::invalid_argument("epsilon_for: sigma must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("epsilon_for: delta must be in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta)) / sigma;
}

Composed compose(double epsilon_step, double delta_step, std::uint64_t steps,
                 double delta_slack) {
  if (steps < 1) throw std::invalid_argument("compose: T must be >= 1");
  if (!(epsilon_step > 0.0)) throw std::invalid_argument("compose: epsilon must be > 0");
  if (!(delta_step >= 0.0 && delta_step < 1.0)) throw std::invalid_argument("compose: bad delta1");
  if (!(delta_slack > 0.0 && delta_slack < 1.0)) throw std::invalid_argument("compose: bad delta'");
  const double t = static_cast<double>(steps);
  Composed c;
  c.epsilon_prime = std::sqrt(2.0 * t * std::log(1.0 / delta_slack)) * epsilon_step +
                    t * epsilon_step * std::expm1(epsilon_step);
  c.delta_total = t * delta_step + delta_slack;
  return c;
}

const char* direction_name(Direction d) noexcept {
  return d == Direction::forward ? "forward" : "backward";
}

void PrivacyLedger::record(std::uint16_t party, Direction dir, double sigma, double clip,
                           std::uint64_t step) {
  entries_[{party, dir}].push_back({sigma, clip, step});
}

const std::vector<LedgerEntry>& PrivacyLedger::entries(std::uint16_t party, Direction dir) const {
  static const std::vector<LedgerEntry> kEmpty;
  auto it = entries_.find({party, dir});
  return it == entries_.end() ? kEmpty : it->second;
}

std::vector<std::pair<std::uint16_t, Direction>> PrivacyLedger::keys() const {
  std::vector<std::pair<std::uint16_t, Direction>> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::size_t PrivacyLedger::total_entries() const noexcept {
  std::size_t n = 0;
  for (const auto& [k, v] : entries_) n += v.size();
  return n;
}

PrivacyReportRow ledger_report_one(const std::vector<LedgerEntry>& entries, double delta_step,
                                   double delta_slack) {
  PrivacyReportRow row;
  row.steps = entries.size();
  if (entries.empty()) {
    row.epsilon_prime = 0.0;
    row.delta_total = delta_slack;
    return row;
  }
  row.sigma = entries.front().sigma;
  for (const LedgerEntry& e : entries) {
    if (e.sigma != row.sigma || e.clip != entries.front().clip) {
      throw std::invalid_argument("ledger_report: heterogeneous (sigma, C) within one direction");
    }
  }
  if (row.sigma > 0.0) {
    const double eps_step = epsilon_for(row.sigma, delta_step);
    const Composed c = compose(eps_step, delta_step, row.steps, delta_slack);
    row.epsilon_prime = c.epsilon_prime;
    row.delta_total = c.delta_total;
  } else {
    row.epsilon_prime = std::nullopt;
    row.delta_total = static_cast<double>(row.steps) * delta_step + delta_slack;
  }
  return row;
}

std::vector<PrivacyReportRow> ledger_report(const PrivacyLedger& ledger, double delta_step,
                                            double delta_slack) {
  std::vector<PrivacyReportRow> out;
  for (const auto& [party, dir] : ledger.keys()) {
    PrivacyReportRow row = ledger_report_one(ledger.entries(party, dir), delta_step, delta_slack);
    row.party = party;
    row.direction = dir;
    out.push_back(row);
  }
  return out;
}

nlohmann::json to_json(const std::vector<PrivacyReportRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const PrivacyReportRow& r : rows) {
    nlohmann::json j{{"party", r.party},
                     {"direction", direction_name(r.direction)},
                     {"T", r.steps},
                     {"sigma", r.sigma},
                     {"delta_total", r.delta_total}};
    j["epsilon_prime"] = r.epsilon_prime ? nlohmann::json(*r.epsilon_prime) : nlohmann::json();
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace ssvfnas::dp

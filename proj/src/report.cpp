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

#include "ssvfnas/report.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ssvfnas::report {

namespace {

std::string number(double v) {
  // Same shortest round-trip form the JSON files use.
  return nlohmann::json(v).dump();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

std::string metrics_csv(const std::vector<run::RunReport>& reports) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& m : reports[i].metrics) {
      out << i << ',' << m.iteration << ',' << number(m.train_loss) << ','
          << (m.val_accuracy ? number(*m.val_accuracy) : "") << ',' << m.rounds << ',' << m.bytes
          << '\n';
    }
  }
  return out.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void emit_report(const std::vector<run::RunReport>& reports, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const bool single = reports.size() == 1;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json privacy = nlohmann::json::array();
  nlohmann::json timing = nlohmann::json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const run::RunReport& r = reports[i];
    runs.push_back(r.to_json());
    for (auto row : dp::to_json(r.privacy)) {
      row["run"] = i;
      privacy.push_back(std::move(row));
    }
    timing.push_back({{"run", i}, {"wall_clock_seconds", r.wall_clock_seconds}});
    for (std::size_t k = 0; k < r.archs.size(); ++k) {
      const std::string name = single ? "arch_party" + std::to_string(k + 1) + ".json"
                                      : "arch_run" + std::to_string(i) + "_party" +
                                            std::to_string(k + 1) + ".json";
      write_json(dir / name, r.archs[k].to_json());
    }
  }
  write_json(dir / "run.json", single ? runs.front() : runs);
  write_text(dir / "metrics.csv", metrics_csv(reports));
  write_json(dir / "privacy.json", privacy);
  write_json(dir / "timing.json", timing);
}

}  // namespace ssvfnas::report

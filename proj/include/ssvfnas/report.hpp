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

#ifndef SSVFNAS_REPORT_HPP
#define SSVFNAS_REPORT_HPP

// Report files for one or more runs.
//
//   run.json            full report (an array when there are several runs)
//   metrics.csv         run,iteration,loss,val_acc,rounds,bytes
//   arch_party<k>.json  one per party (arch_run<i>_party<k>.json for several runs)
//   privacy.json        composed budget rows, each tagged with its run index
//   timing.json         wall-clock seconds per run; kept apart so the others are reproducible

#include <filesystem>
#include <string>
#include <vector>

#include "ssvfnas/runner.hpp"

namespace ssvfnas::report {

inline constexpr const char* kMetricsHeader = "run,iteration,loss,val_acc,rounds,bytes";

std::string metrics_csv(const std::vector<run::RunReport>& reports);

void emit_report(const std::vector<run::RunReport>& reports, const std::filesystem::path& dir);

/// Writes `doc` followed by a newline, creating parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ssvfnas::report

#endif  // SSVFNAS_REPORT_HPP

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

// Command-line front end. Exit codes: 0 success, 1 other failure, 2 config error,
// 3 numerical abort.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssvfnas/report.hpp"
#include "ssvfnas/runner.hpp"
#include "ssvfnas/ssl_pretrain.hpp"

namespace {

using ssvfnas::run::ConfigError;
using ssvfnas::run::ExperimentConfig;

// Flags shared by the stochastic subcommands. Each overrides the config key of the same name.
struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::optional<std::string> algorithm;
  std::optional<std::size_t> parties;
  std::optional<double> overlap;
  std::optional<std::string> data_dir;
  std::optional<std::string> transport;
  std::optional<std::size_t> search_epochs;
  std::optional<std::size_t> pretrain_epochs;
  std::optional<std::size_t> evaluate_epochs;
  std::string out = "out";

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "base seed")->required();
    app->add_option("--algorithm", algorithm, "ssnas_local|vfnas1|vfnas2|ss_vfnas1|ss_vfnas2|vfnas_e2e");
    app->add_option("--parties", parties, "number of parties K");
    app->add_option("--overlap", overlap, "aligned fraction in (0, 1]");
    app->add_option("--data", data_dir, "dataset directory written by gen-data");
    app->add_option("--transport", transport, "in_process|socket");
    app->add_option("--search-epochs", search_epochs);
    app->add_option("--pretrain-epochs", pretrain_epochs);
    app->add_option("--evaluate-epochs", evaluate_epochs);
    app->add_option("--out", out, "output directory");
  }

  ExperimentConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config.empty()) j = ssvfnas::report::read_json(config);
    if (algorithm) j["algorithm"] = *algorithm;
    if (parties) j["parties"] = *parties;
    if (overlap) j["overlap"] = *overlap;
    if (data_dir) j["data_dir"] = *data_dir;
    if (transport) j["transport"] = *transport;
    if (search_epochs) j["epochs"]["search"] = *search_epochs;
    if (pretrain_epochs) j["epochs"]["pretrain"] = *pretrain_epochs;
    if (evaluate_epochs) j["epochs"]["evaluate"] = *evaluate_epochs;
    j["seed"] = seed;
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    cfg.validate();
    return cfg;
  }
};

void print_summary(const ssvfnas::run::RunReport& r) {
  std::cout << "iterations " << r.iterations << "  search rounds " << r.rounds
            << "  rounds to convergence " << r.rounds_to_convergence;
  if (r.test_accuracy) std::cout << "  test accuracy " << *r.test_accuracy;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised vertical federated architecture search simulator"};
  app.require_subcommand(1);

  CommonFlags gen_flags, pre_flags, search_flags, eval_flags, sweep_flags;
  std::string archs_dir;
  std::string axis;
  std::vector<double> values;
  std::size_t num_seeds = 3;
  std::vector<std::string> report_inputs;
  std::string report_out;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic vertical dataset");
  gen_flags.attach(gen);
  auto* pre = app.add_subcommand("pretrain", "self-supervised pre-search, one checkpoint per party");
  pre_flags.attach(pre);
  auto* search = app.add_subcommand("search", "pre-search (if any) and federated search");
  search_flags.attach(search);
  auto* evaluate = app.add_subcommand("evaluate", "retrain searched architectures and test them");
  eval_flags.attach(evaluate);
  evaluate->add_option("--archs", archs_dir, "directory holding arch_party<k>.json")->required();
  auto* sweep = app.add_subcommand("sweep", "one full run per (axis value, seed)");
  sweep_flags.attach(sweep);
  sweep->add_option("--axis", axis, "dp_sigma|parties|overlap")->required();
  sweep->add_option("--values", values, "axis values")->required();
  sweep->add_option("--num-seeds", num_seeds, "seeds used: seed, seed+1, ...");
  auto* rep = app.add_subcommand("report", "merge run.json files into one report directory");
  rep->add_option("inputs", report_inputs, "run directories")->required();
  rep->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = gen_flags.resolve();
      const auto ds = ssvfnas::run::prepare_dataset(cfg);
      ssvfnas::data::save(ds, gen_flags.out, {{"population", cfg.population.to_json()},
                                              {"overlap", cfg.overlap},
                                              {"seed", *cfg.seed}});
      std::cout << "wrote " << ds.parties() << " shards of " << ds.samples() << " rows to "
                << gen_flags.out << '\n';
    } else if (*pre) {
      const ExperimentConfig cfg = pre_flags.resolve();
      const auto losses = ssvfnas::run::run_pretrain(cfg, pre_flags.out);
      for (std::size_t k = 0; k < losses.size(); ++k) {
        std::cout << "party " << k + 1 << ": " << losses[k].size() << " batches";
        if (!losses[k].empty()) std::cout << ", final loss " << losses[k].back();
        std::cout << '\n';
      }
    } else if (*search) {
      const ExperimentConfig cfg = search_flags.resolve();
      const auto r = ssvfnas::run::run_search(cfg);
      ssvfnas::report::emit_report({r}, search_flags.out);
      print_summary(r);
    } else if (*evaluate) {
      const ExperimentConfig cfg = eval_flags.resolve();
      const auto r = ssvfnas::run::run_evaluate(cfg, ssvfnas::run::load_archs(cfg, archs_dir));
      ssvfnas::report::emit_report({r}, eval_flags.out);
      print_summary(r);
    } else if (*sweep) {
      const ExperimentConfig cfg = sweep_flags.resolve();
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < num_seeds; ++i) seeds.push_back(*cfg.seed + i);
      const auto points = ssvfnas::run::sweep(cfg, ssvfnas::run::parse_axis(axis), values, seeds);
      std::vector<ssvfnas::run::RunReport> reports;
      for (const auto& p : points) reports.push_back(p.report);
      ssvfnas::report::emit_report(reports, sweep_flags.out);
      const auto summary = ssvfnas::run::summarize(points);
      ssvfnas::report::write_json(std::filesystem::path(sweep_flags.out) / "summary.json",
                                  {{"axis", axis}, {"points", summary}});
      std::cout << summary.dump(2) << '\n';
    } else if (*rep) {
      nlohmann::json runs = nlohmann::json::array();
      for (const auto& in : report_inputs) {
        nlohmann::json doc = ssvfnas::report::read_json(std::filesystem::path(in) / "run.json");
        if (doc.is_array()) {
          for (auto& r : doc) runs.push_back(std::move(r));
        } else {
          runs.push_back(std::move(doc));
        }
      }
      ssvfnas::report::write_json(std::filesystem::path(report_out) / "run.json", runs);
      for (const auto& r : runs) {
        std::cout << r.at("config").at("algorithm").get<std::string>() << " seed "
                  << r.at("config").at("seed") << ": test accuracy " << r.at("test_accuracy")
                  << ", search rounds " << r.at("rounds").at("search") << '\n';
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ssvfnas::NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

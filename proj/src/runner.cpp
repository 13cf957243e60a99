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

#include "ssvfnas/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "ssvfnas/rng.hpp"
#include "ssvfnas/ssl_pretrain.hpp"

namespace ssvfnas::run {

namespace {

enum StreamTag : std::uint64_t {
  kFederation = 21,
  kRetrain = 22,
  kTrainSampler = 23,
  kValSampler = 24,
  kPretrain = 25,
  kInfo = 26,
  kRetrainSampler = 27,
};

using nlohmann::json;

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace

const char* algorithm_name(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::ssnas_local: return "ssnas_local";
    case Algorithm::vfnas1: return "vfnas1";
    case Algorithm::vfnas2: return "vfnas2";
    case Algorithm::ss_vfnas1: return "ss_vfnas1";
    case Algorithm::ss_vfnas2: return "ss_vfnas2";
    case Algorithm::vfnas_e2e: return "vfnas_e2e";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::ssnas_local, Algorithm::vfnas1, Algorithm::vfnas2,
                      Algorithm::ss_vfnas1, Algorithm::ss_vfnas2, Algorithm::vfnas_e2e}) {
    if (name == algorithm_name(a)) return a;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

bool uses_pretrain(Algorithm a) noexcept {
  return a == Algorithm::ssnas_local || a == Algorithm::ss_vfnas1 || a == Algorithm::ss_vfnas2;
}

bool uses_bilevel(Algorithm a) noexcept {
  return a == Algorithm::vfnas1 || a == Algorithm::ss_vfnas1;
}

void ExperimentConfig::validate() const {
  if (!seed) throw ConfigError("a seed is required");
  try {
    population.validate();
    federation.validate();
    optim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data_dir == std::nullopt && (parties < 1 || parties > population.block_dims.size())) {
    throw ConfigError("parties must lie in [1, " + std::to_string(population.block_dims.size()) + "]");
  }
  if (!(overlap > 0.0 && overlap <= 1.0)) throw ConfigError("overlap must lie in (0, 1]");
  double s = 0.0;
  for (double r : split) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    s += r;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (batch == 0 || eval_batch == 0 || eval_every == 0) throw ConfigError("batch sizes must be >= 1");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
}

json ExperimentConfig::to_json() const {
  const auto& f = federation;
  std::vector<std::string> ops;
  for (auto op : f.opset.ops) ops.emplace_back(nas::op_name(op));
  json j{
      {"algorithm", algorithm_name(algorithm)},
      {"parties", parties},
      {"seed", seed ? json(*seed) : json()},
      {"population", population.to_json()},
      {"overlap", overlap},
      {"split", split},
      {"epochs",
       {{"pretrain", pretrain_epochs}, {"search", search_epochs}, {"evaluate", retrain_epochs()}}},
      {"batch_size", batch},
      {"eval_every", eval_every},
      {"eval_batch", eval_batch},
      {"gamma", gamma},
      {"lambda", optim.lambda},
      {"optim",
       {{"w_lr", optim.weights.lr},
        {"w_momentum", optim.weights.momentum},
        {"alpha_lr", optim.arch.lr},
        {"alpha_momentum", optim.arch.momentum}}},
      {"supernet",
       {{"nodes", f.supernet_nodes}, {"hidden", f.hidden}, {"embed_dim", f.embed_dim}, {"ops", ops}}},
      {"head_hidden", f.head_hidden},
      {"dp",
       {{"enabled", f.dp.enabled},
        {"clip_forward", f.dp.clip_forward},
        {"sigma_forward", f.dp.sigma_forward},
        {"clip_backward", f.dp.clip_backward},
        {"sigma_backward", f.dp.sigma_backward},
        {"noise_at_eval", f.dp.noise_at_eval},
        {"delta_step", f.dp.delta_step},
        {"delta_slack", f.dp.delta_slack}}},
      {"moco",
       {{"queue", f.moco.queue},
        {"momentum", f.moco.momentum},
        {"tau", f.moco.tau},
        {"head", f.moco.head},
        {"lr", f.moco.lr},
        {"sgd_momentum", f.moco.sgd_momentum},
        {"batch", f.moco.batch},
        {"jitter", f.moco.augment.jitter},
        {"mask_prob", f.moco.augment.mask_prob}}},
      {"wire", f.wire_dtype == wire::Dtype::f32 ? "f32" : "f64"},
      {"transport", transport::mode_name(f.transport)},
      {"retrain_init", retrain_init == RetrainInit::scratch ? "scratch" : "inherit"},
  };
  j["data_dir"] = data_dir ? json(data_dir->string()) : json();
  j["checkpoint_dir"] = checkpoint_dir ? json(checkpoint_dir->string()) : json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    require_keys(j,
                 {"algorithm", "parties", "seed", "population", "overlap", "split", "epochs",
                  "batch_size", "eval_every", "eval_batch", "gamma", "lambda", "optim", "supernet",
                  "head_hidden", "dp", "moco", "wire", "transport", "retrain_init", "data_dir",
                  "checkpoint_dir"},
                 "config");
    if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    read(j, "parties", c.parties);
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("population")) {
      require_keys(j.at("population"), {"samples", "classes", "block_dims", "separation", "noise"},
                   "population");
      c.population = data::PopulationSpec::from_json(j.at("population"));
    }
    read(j, "overlap", c.overlap);
    read(j, "split", c.split);
    if (j.contains("epochs")) {
      const json& e = j.at("epochs");
      require_keys(e, {"pretrain", "search", "evaluate"}, "epochs");
      read(e, "pretrain", c.pretrain_epochs);
      read(e, "search", c.search_epochs);
      if (e.contains("evaluate") && !e.at("evaluate").is_null()) {
        c.evaluate_epochs = e.at("evaluate").get<std::size_t>();
      }
    }
    read(j, "batch_size", c.batch);
    read(j, "eval_every", c.eval_every);
    read(j, "eval_batch", c.eval_batch);
    read(j, "gamma", c.gamma);
    read(j, "lambda", c.optim.lambda);
    if (j.contains("optim")) {
      const json& o = j.at("optim");
      require_keys(o, {"w_lr", "w_momentum", "alpha_lr", "alpha_momentum"}, "optim");
      read(o, "w_lr", c.optim.weights.lr);
      read(o, "w_momentum", c.optim.weights.momentum);
      read(o, "alpha_lr", c.optim.arch.lr);
      read(o, "alpha_momentum", c.optim.arch.momentum);
    }
    auto& f = c.federation;
    if (j.contains("supernet")) {
      const json& s = j.at("supernet");
      require_keys(s, {"nodes", "hidden", "embed_dim", "ops"}, "supernet");
      read(s, "nodes", f.supernet_nodes);
      read(s, "hidden", f.hidden);
      read(s, "embed_dim", f.embed_dim);
      if (s.contains("ops")) {
        f.opset.ops.clear();
        for (const auto& op : s.at("ops")) f.opset.ops.push_back(nas::parse_op(op.get<std::string>()));
      }
    }
    read(j, "head_hidden", f.head_hidden);
    if (j.contains("dp")) {
      const json& d = j.at("dp");
      require_keys(d, {"enabled", "clip_forward", "sigma_forward", "clip_backward", "sigma_backward",
                       "noise_at_eval", "delta_step", "delta_slack"},
                   "dp");
      read(d, "enabled", f.dp.enabled);
      read(d, "clip_forward", f.dp.clip_forward);
      read(d, "sigma_forward", f.dp.sigma_forward);
      read(d, "clip_backward", f.dp.clip_backward);
      read(d, "sigma_backward", f.dp.sigma_backward);
      read(d, "noise_at_eval", f.dp.noise_at_eval);
      read(d, "delta_step", f.dp.delta_step);
      read(d, "delta_slack", f.dp.delta_slack);
    }
    if (j.contains("moco")) {
      const json& m = j.at("moco");
      require_keys(m, {"queue", "momentum", "tau", "head", "lr", "sgd_momentum", "batch", "jitter",
                       "mask_prob"},
                   "moco");
      read(m, "queue", f.moco.queue);
      read(m, "momentum", f.moco.momentum);
      read(m, "tau", f.moco.tau);
      read(m, "head", f.moco.head);
      read(m, "lr", f.moco.lr);
      read(m, "sgd_momentum", f.moco.sgd_momentum);
      read(m, "batch", f.moco.batch);
      read(m, "jitter", f.moco.augment.jitter);
      read(m, "mask_prob", f.moco.augment.mask_prob);
    }
    if (j.contains("wire")) {
      const auto w = j.at("wire").get<std::string>();
      if (w != "f32" && w != "f64") throw ConfigError("wire must be f32 or f64");
      f.wire_dtype = w == "f32" ? wire::Dtype::f32 : wire::Dtype::f64;
    }
    if (j.contains("transport")) f.transport = transport::parse_mode(j.at("transport").get<std::string>());
    if (j.contains("retrain_init")) {
      const auto r = j.at("retrain_init").get<std::string>();
      if (r != "scratch" && r != "inherit") throw ConfigError("retrain_init must be scratch or inherit");
      c.retrain_init = r == "scratch" ? RetrainInit::scratch : RetrainInit::inherit;
    }
    if (j.contains("data_dir") && !j.at("data_dir").is_null()) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("checkpoint_dir") && !j.at("checkpoint_dir").is_null()) {
      c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::vector<double> RunReport::val_history() const {
  std::vector<double> h;
  for (const auto& m : metrics) {
    if (m.val_accuracy) h.push_back(*m.val_accuracy);
  }
  return h;
}

json RunReport::to_json() const {
  json metrics_json = json::array();
  for (const auto& m : metrics) {
    metrics_json.push_back({{"iteration", m.iteration},
                            {"train_loss", m.train_loss},
                            {"val_loss", m.val_loss},
                            {"info_loss", m.info_loss},
                            {"val_acc", m.val_accuracy ? json(*m.val_accuracy) : json()},
                            {"rounds", m.rounds},
                            {"bytes", m.bytes}});
  }
  json archs_json = json::array();
  for (std::size_t k = 0; k < archs.size(); ++k) {
    json a = archs[k].to_json();
    a["party"] = k + 1;
    archs_json.push_back(std::move(a));
  }
  return {{"config", config},
          {"metrics", metrics_json},
          {"pretrain_loss", pretrain_loss},
          {"rounds",
           {{"pretrain", pretrain_rounds},
            {"search", rounds},
            {"eval", eval_rounds},
            {"retrain", retrain_rounds}}},
          {"bytes", bytes},
          {"iterations", iterations},
          {"convergence",
           {{"eval_index", convergence_eval ? json(*convergence_eval) : json()},
            {"iteration", convergence_iteration},
            {"rounds", rounds_to_convergence}}},
          {"test_accuracy", test_accuracy ? json(*test_accuracy) : json()},
          {"architectures", archs_json},
          {"privacy", dp::to_json(privacy)},
          {"transcript_hash", transcript_hash}};
}

std::optional<std::size_t> detect_convergence(std::span<const double> history,
                                              std::size_t patience) {
  if (history.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t t = 1; t < history.size(); ++t) {
    if (history[t] > history[best]) {
      best = t;
    } else if (t - best >= patience) {
      return best;
    }
  }
  return std::nullopt;
}

data::VerticalDataset prepare_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_dir) return data::load(*cfg.data_dir);
  data::VerticalDataset ds = data::generate_blobs(cfg.parties, cfg.population, *cfg.seed);
  data::set_overlap(ds, cfg.overlap, *cfg.seed);
  ds.splits = data::split(ds, cfg.split, *cfg.seed);
  return ds;
}

namespace {

/// Cycles through a pool in freshly shuffled order each pass.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed)
      : pool_(std::move(pool)), batch_(batch), rng_(seed) {
    if (pool_.empty()) throw std::invalid_argument("sampling from an empty split");
    reshuffle();
  }

  std::size_t batches_per_pass() const { return (pool_.size() + batch_ - 1) / batch_; }

  std::vector<std::size_t> next() {
    if (pos_ >= pool_.size()) reshuffle();
    const std::size_t end = std::min(pool_.size(), pos_ + batch_);
    std::vector<std::size_t> out(pool_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 pool_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> pool_;
  std::size_t batch_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

struct Setup {
  data::VerticalDataset ds;
  std::vector<std::size_t> blocks;  // data party index (1-based) behind each federation party
};

Setup make_setup(const ExperimentConfig& cfg) {
  Setup s{prepare_dataset(cfg), {}};
  const std::size_t K = s.ds.parties();
  if (cfg.algorithm == Algorithm::ssnas_local) {
    s.blocks = {K};
  } else {
    for (std::size_t k = 1; k <= K; ++k) s.blocks.push_back(k);
  }
  return s;
}

std::unique_ptr<fed::Federation> make_federation(const ExperimentConfig& cfg, const Setup& s,
                                                 std::uint64_t seed) {
  std::vector<Tensor> shards;
  for (std::size_t b : s.blocks) shards.push_back(s.ds.shards.at(b - 1));
  return std::make_unique<fed::Federation>(cfg.federation, std::move(shards),
                                           std::vector<std::vector<int>>{s.ds.labels},
                                           std::vector<std::size_t>{s.ds.classes}, seed);
}

std::filesystem::path checkpoint_stem(const std::filesystem::path& dir, std::size_t block) {
  return dir / ("party_" + std::to_string(block));
}

std::vector<std::vector<double>> pretrain_all(const ExperimentConfig& cfg, const Setup& s,
                                              fed::Federation& f) {
  std::vector<std::vector<double>> losses;
  const std::vector<std::size_t> rows = s.ds.pretrain_rows();
  for (std::uint16_t k = 1; k <= f.num_parties(); ++k) {
    fed::PartyState& p = f.party(k);
    const std::size_t block = s.blocks[k - 1];
    ssl::MocoState state(p.net, p.arch, cfg.federation.moco,
                         derive_seed(*cfg.seed, {kPretrain, block, 0}));
    auto rng = make_rng(*cfg.seed, {kPretrain, block, 1});
    losses.push_back(ssl::pretrain_party(p.net, p.arch, state, p.features.gather_rows(rows),
                                         cfg.pretrain_epochs, rng)
                         .loss_history);
  }
  return losses;
}

void append_privacy(dp::PrivacyLedger& into, const dp::PrivacyLedger& from) {
  for (const auto& [party, dir] : from.keys()) {
    for (const auto& e : from.entries(party, dir)) into.record(party, dir, e.sigma, e.clip, e.step);
  }
}

void search_stage(const ExperimentConfig& cfg, const Setup& s, fed::Federation& f, RunReport& r) {
  if (uses_pretrain(cfg.algorithm)) {
    if (cfg.checkpoint_dir) {
      for (std::uint16_t k = 1; k <= f.num_parties(); ++k) {
        ssl::load_checkpoint(checkpoint_stem(*cfg.checkpoint_dir, s.blocks[k - 1]), f.party(k).net,
                             f.party(k).arch);
      }
    } else if (cfg.pretrain_epochs > 0) {
      const std::uint64_t before = f.rounds() + f.counter().eval_rounds;
      r.pretrain_loss = pretrain_all(cfg, s, f);
      r.pretrain_rounds = f.rounds() + f.counter().eval_rounds - before;
    }
  }
  const bool e2e = cfg.algorithm == Algorithm::vfnas_e2e;
  const double info_weight = e2e ? cfg.gamma : 0.0;
  if (e2e && info_weight != 0.0) f.enable_info(derive_seed(*cfg.seed, {kInfo}));

  nas::NasOptimizer opt(cfg.optim);
  BatchSampler train(s.ds.splits.train, cfg.batch, derive_seed(*cfg.seed, {kTrainSampler}));
  BatchSampler val(s.ds.splits.val, cfg.batch, derive_seed(*cfg.seed, {kValSampler}));
  const std::size_t iterations = cfg.search_epochs * train.batches_per_pass();
  for (std::size_t it = 1; it <= iterations; ++it) {
    const auto bt = train.next();
    const auto bv = val.next();
    const nas::StepReport step = uses_bilevel(cfg.algorithm)
                                     ? nas::bilevel_step(f, opt, bt, bv)
                                     : nas::mixlevel_step(f, opt, bt, bv, info_weight);
    IterationMetrics m;
    m.iteration = it;
    m.train_loss = step.train_loss;
    m.val_loss = step.val_loss;
    m.info_loss = step.info_loss;
    m.rounds = f.rounds();
    if (it % cfg.eval_every == 0 || it == iterations) {
      m.val_accuracy = f.accuracy(s.ds.splits.val, cfg.eval_batch);
    }
    m.bytes = f.counter().total_bytes();
    r.metrics.push_back(m);
  }
  r.iterations = iterations;
  r.rounds = f.rounds();
  r.eval_rounds = f.counter().eval_rounds;
  r.bytes = f.counter().total_bytes();
  r.archs = f.discretize_all();

  const auto history = r.val_history();
  r.convergence_eval = detect_convergence(history);
  std::size_t seen = 0;
  r.convergence_iteration = iterations;
  r.rounds_to_convergence = r.rounds;
  if (r.convergence_eval) {
    for (const auto& m : r.metrics) {
      if (!m.val_accuracy) continue;
      if (seen++ == *r.convergence_eval) {
        r.convergence_iteration = m.iteration;
        r.rounds_to_convergence = m.rounds;
        break;
      }
    }
  }
}

void evaluate_stage(const ExperimentConfig& cfg, const Setup& s,
                    const std::vector<nas::DiscreteArch>& archs, const fed::Federation* searched,
                    RunReport& r, dp::PrivacyLedger& ledger) {
  auto f = make_federation(cfg, s, derive_seed(*cfg.seed, {kRetrain}));
  if (searched && cfg.retrain_init == RetrainInit::inherit) {
    for (std::uint16_t k = 1; k <= f->num_parties(); ++k) {
      f->party(k).net.weights() = searched->party(k).net.weights();
    }
    f->label_state().head = searched->label_state().head;
  }
  f->set_discrete(archs);
  nas::NasOptimizer opt(cfg.optim);
  std::vector<std::size_t> pool = s.ds.splits.train;
  pool.insert(pool.end(), s.ds.splits.val.begin(), s.ds.splits.val.end());
  std::sort(pool.begin(), pool.end());
  BatchSampler sampler(pool, cfg.batch, derive_seed(*cfg.seed, {kRetrainSampler}));
  const std::size_t steps = cfg.retrain_epochs() * sampler.batches_per_pass();
  for (std::size_t i = 0; i < steps; ++i) nas::weight_step(*f, opt, sampler.next());
  r.retrain_rounds = f->rounds();
  r.test_accuracy = f->accuracy(s.ds.splits.test, cfg.eval_batch);
  r.eval_rounds += f->counter().eval_rounds;
  r.bytes += f->counter().total_bytes();
  append_privacy(ledger, f->ledger());
}

RunReport pipeline(const ExperimentConfig& cfg, bool search, bool evaluate,
                   const std::vector<nas::DiscreteArch>* given) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Setup s = make_setup(cfg);
  RunReport r;
  r.config = cfg.to_json();
  dp::PrivacyLedger ledger;
  std::unique_ptr<fed::Federation> f;
  if (search) {
    f = make_federation(cfg, s, derive_seed(*cfg.seed, {kFederation}));
    search_stage(cfg, s, *f, r);
    append_privacy(ledger, f->ledger());
    r.transcript_hash = f->transcript().hash();
  } else {
    r.archs = *given;
  }
  if (evaluate) evaluate_stage(cfg, s, r.archs, f.get(), r, ledger);
  r.privacy = dp::ledger_report(ledger, cfg.federation.dp.delta_step, cfg.federation.dp.delta_slack);
  r.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) { return pipeline(cfg, true, true, nullptr); }

RunReport run_search(const ExperimentConfig& cfg) { return pipeline(cfg, true, false, nullptr); }

RunReport run_evaluate(const ExperimentConfig& cfg, const std::vector<nas::DiscreteArch>& archs) {
  return pipeline(cfg, false, true, &archs);
}

std::vector<std::vector<double>> run_pretrain(const ExperimentConfig& cfg,
                                              const std::filesystem::path& dir) {
  cfg.validate();
  const Setup s = make_setup(cfg);
  auto f = make_federation(cfg, s, derive_seed(*cfg.seed, {kFederation}));
  auto losses = pretrain_all(cfg, s, *f);
  std::filesystem::create_directories(dir);
  for (std::uint16_t k = 1; k <= f->num_parties(); ++k) {
    const std::size_t block = s.blocks[k - 1];
    ssl::save_checkpoint(checkpoint_stem(dir, block), f->party(k).net, f->party(k).arch,
                         {{"party", block}, {"epochs", cfg.pretrain_epochs}, {"seed", *cfg.seed}});
  }
  return losses;
}

std::vector<nas::DiscreteArch> load_archs(const ExperimentConfig& cfg,
                                          const std::filesystem::path& dir) {
  cfg.validate();
  const Setup s = make_setup(cfg);
  std::vector<nas::DiscreteArch> out;
  for (std::size_t k = 1; k <= s.blocks.size(); ++k) {
    const auto& f = cfg.federation;
    const auto topology = nas::Supernet::build(f.supernet_nodes, f.hidden,
                                               s.ds.shards.at(s.blocks[k - 1] - 1).cols(),
                                               f.embed_dim, f.opset, 0)
                              .first;
    const auto path = dir / ("arch_party" + std::to_string(k) + ".json");
    std::ifstream in(path);
    if (!in) throw ConfigError("missing architecture file " + path.string());
    out.push_back(nas::DiscreteArch::from_json(nlohmann::json::parse(in), topology));
  }
  return out;
}

const char* axis_name(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::dp_sigma: return "dp_sigma";
    case SweepAxis::parties: return "parties";
    case SweepAxis::overlap: return "overlap";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& name) {
  for (SweepAxis a : {SweepAxis::dp_sigma, SweepAxis::parties, SweepAxis::overlap}) {
    if (name == axis_name(a)) return a;
  }
  throw ConfigError("unknown sweep axis '" + name + "'");
}

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::dp_sigma:
      if (!(value >= 0.0)) throw ConfigError("dp sigma must be >= 0");
      c.federation.dp.enabled = true;
      c.federation.dp.sigma_forward = value;
      c.federation.dp.sigma_backward = value;
      c.federation.dp.clip_forward = 1.0;
      c.federation.dp.clip_backward = 1.0;
      c.federation.dp.noise_at_eval = true;
      break;
    case SweepAxis::parties:
      if (value < 1.0 || value != std::floor(value)) throw ConfigError("party count must be a positive integer");
      c.parties = static_cast<std::size_t>(value);
      break;
    case SweepAxis::overlap:
      c.overlap = value;
      break;
  }
  return c;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis,
                              const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepPoint> out;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = apply_axis(base, axis, v);
      c.seed = seed;
      out.push_back({v, seed, run_experiment(c)});
    }
  }
  return out;
}

json summarize(const std::vector<SweepPoint>& points) {
  std::map<double, std::vector<const SweepPoint*>> by_value;
  for (const auto& p : points) by_value[p.value].push_back(&p);
  auto stats = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return json{{"mean", mean}, {"std", xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0}};
  };
  json out = json::array();
  for (const auto& [value, ps] : by_value) {
    std::vector<double> acc, rounds, conv;
    for (const auto* p : ps) {
      if (p->report.test_accuracy) acc.push_back(*p->report.test_accuracy);
      rounds.push_back(static_cast<double>(p->report.rounds));
      conv.push_back(static_cast<double>(p->report.rounds_to_convergence));
    }
    json row{{"value", value}, {"runs", ps.size()}, {"rounds", stats(rounds)},
             {"rounds_to_convergence", stats(conv)}};
    row["test_accuracy"] = acc.empty() ? json() : stats(acc);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace ssvfnas::run

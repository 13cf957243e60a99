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

#include "ssvfnas/nas_optim.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ssvfnas::nas {

const char* phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::w_update: return "W_UPDATE";
    case Phase::alpha_update: return "ALPHA_UPDATE";
    case Phase::eval: return "EVAL";
  }
  return "?";
}

void sgd_update(Tensor& param, const Tensor& grad, Tensor& buffer, const SgdConfig& cfg) {
  require_same_shape(param, grad, "sgd_update");
  auto p = param.data();
  auto g = grad.data();
  if (cfg.momentum == 0.0) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.lr * g[i];
    return;
  }
  if (buffer.shape() != param.shape()) buffer = Tensor(param.shape(), 0.0);
  auto b = buffer.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    b[i] = cfg.momentum * b[i] + g[i];
    p[i] -= cfg.lr * b[i];
  }
}

Sgd::Sgd(SgdConfig cfg) : cfg_(cfg) {}

void Sgd::step(const std::string& key, Tensor& param, const Tensor& grad) {
  sgd_update(param, grad, buffers_[key], cfg_);
  if (!param.all_finite()) throw NumericError("parameter '" + key + "' became non-finite");
}

void OptimConfig::validate() const {
  if (!(weights.lr > 0.0)) throw std::invalid_argument("weight learning rate must be > 0");
  if (!(arch.lr >= 0.0)) throw std::invalid_argument("arch learning rate must be >= 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (weights.momentum < 0.0 || arch.momentum < 0.0) {
    throw std::invalid_argument("momentum must be >= 0");
  }
}

NasOptimizer::NasOptimizer(OptimConfig cfg) : cfg_(cfg), weights_(cfg.weights), arch_(cfg.arch) {
  cfg_.validate();
}

void NasOptimizer::apply(SearchModel& model, ParamGroup group,
                         const std::map<std::string, Tensor>& grads) {
  Sgd& sgd = group == ParamGroup::weights ? weights_ : arch_;
  for (const ParamRef& ref : model.params(group)) {
    auto it = grads.find(ref.key);
    if (it == grads.end()) continue;
    sgd.step(ref.key, *ref.value, it->second);
  }
}

double grad_norm(const std::map<std::string, Tensor>& grads) noexcept {
  double s = 0.0;
  for (const auto& [k, g] : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

namespace {

void require_batches(std::span<const std::size_t> train, std::span<const std::size_t> val) {
  if (train.empty() || val.empty()) throw std::invalid_argument("search step with an empty batch");
  std::unordered_set<std::size_t> seen(train.begin(), train.end());
  for (std::size_t v : val) {
    if (seen.count(v)) {
      throw std::invalid_argument("train and validation batches overlap at sample " +
                                  std::to_string(v));
    }
  }
}

}  // namespace

StepReport bilevel_step(SearchModel& model, NasOptimizer& opt,
                        std::span<const std::size_t> batch_train,
                        std::span<const std::size_t> batch_val) {
  require_batches(batch_train, batch_val);
  const std::uint64_t before = model.rounds();
  StepReport report;

  ExchangeSpec arch_spec;
  arch_spec.primary = batch_val;
  arch_spec.phase = Phase::alpha_update;
  arch_spec.want_arch = true;
  ExchangeResult a = model.exchange(arch_spec);
  opt.apply(model, ParamGroup::arch, a.arch_grads);
  report.val_loss = a.primary_loss;
  report.arch_grad_norm = grad_norm(a.arch_grads);

  ExchangeSpec w_spec;
  w_spec.primary = batch_train;
  w_spec.phase = Phase::w_update;
  w_spec.want_weights = true;
  ExchangeResult w = model.exchange(w_spec);
  opt.apply(model, ParamGroup::weights, w.weight_grads);
  report.train_loss = w.primary_loss;
  report.weight_grad_norm = grad_norm(w.weight_grads);

  report.rounds_used = model.rounds() - before;
  return report;
}

StepReport mixlevel_step(SearchModel& model, NasOptimizer& opt,
                         std::span<const std::size_t> batch_train,
                         std::span<const std::size_t> batch_val, double info_weight) {
  require_batches(batch_train, batch_val);
  const std::uint64_t before = model.rounds();

  ExchangeSpec spec;
  spec.primary = batch_train;
  spec.secondary = batch_val;
  spec.secondary_weight = opt.config().lambda;
  spec.info_weight = info_weight;
  spec.phase = Phase::w_update;
  spec.want_weights = true;
  spec.want_arch = true;
  ExchangeResult r = model.exchange(spec);
  // Both gradients were taken at the same point; apply them together.
  opt.apply(model, ParamGroup::arch, r.arch_grads);
  opt.apply(model, ParamGroup::weights, r.weight_grads);

  StepReport report;
  report.train_loss = r.primary_loss;
  report.val_loss = r.secondary_loss;
  report.info_loss = r.info_loss;
  report.weight_grad_norm = grad_norm(r.weight_grads);
  report.arch_grad_norm = grad_norm(r.arch_grads);
  report.rounds_used = model.rounds() - before;
  return report;
}

StepReport weight_step(SearchModel& model, NasOptimizer& opt,
                       std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("weight step with an empty batch");
  const std::uint64_t before = model.rounds();
  ExchangeSpec spec;
  spec.primary = batch;
  spec.phase = Phase::w_update;
  spec.want_weights = true;
  ExchangeResult r = model.exchange(spec);
  opt.apply(model, ParamGroup::weights, r.weight_grads);
  StepReport report;
  report.train_loss = r.primary_loss;
  report.weight_grad_norm = grad_norm(r.weight_grads);
  report.rounds_used = model.rounds() - before;
  return report;
}

}  // namespace ssvfnas::nas

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

#ifndef SSVFNAS_NAS_OPTIM_HPP
#define SSVFNAS_NAS_OPTIM_HPP

// Weight and architecture update rules.
//
// bilevel_step: first-order bilevel search. alpha descends the validation loss
//   at the current weights, then the weights descend the training loss. Two
//   exchanges, two communication rounds.
// mixlevel_step: alpha descends l_trn + lambda * l_val and the weights descend
//   l_trn, from gradients gathered in one fused exchange (one round).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssvfnas/autodiff.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::nas {

enum class Phase : std::uint8_t { w_update = 0, alpha_update = 1, eval = 2 };

const char* phase_name(Phase p) noexcept;

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.9;
};

/// p <- p - lr * g, or with momentum mu: buf <- mu * buf + g, p <- p - lr * buf.
void sgd_update(Tensor& param, const Tensor& grad, Tensor& buffer, const SgdConfig& cfg);

/// SGD with one momentum buffer per parameter key.
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg);
  void step(const std::string& key, Tensor& param, const Tensor& grad);
  const SgdConfig& config() const noexcept { return cfg_; }
  const std::map<std::string, Tensor>& buffers() const noexcept { return buffers_; }

 private:
  SgdConfig cfg_;
  std::map<std::string, Tensor> buffers_;
};

struct OptimConfig {
  SgdConfig weights{0.025, 0.9};
  SgdConfig arch{3e-4, 0.0};
  double lambda = 1.0;
  void validate() const;
};

enum class ParamGroup { weights, arch };

struct ParamRef {
  std::string key;
  Tensor* value = nullptr;
};

/// What one exchange should compute.
///
/// The primary rows drive the loss `l_p`; the optional secondary rows drive
/// `l_s`. Weight gradients are of l_p (+ info_weight * l_info when info_weight
/// > 0); arch gradients are of l_p + secondary_weight * l_s (+ the same info term).
struct ExchangeSpec {
  std::span<const std::size_t> primary;
  std::span<const std::size_t> secondary;
  double secondary_weight = 0.0;
  double info_weight = 0.0;
  Phase phase = Phase::w_update;
  bool want_weights = false;
  bool want_arch = false;
};

struct ExchangeResult {
  std::map<std::string, Tensor> weight_grads;
  std::map<std::string, Tensor> arch_grads;
  double primary_loss = 0.0;
  double secondary_loss = 0.0;
  double info_loss = 0.0;
};

/// Anything the step rules can drive: the federation, or a closed-form toy.
class SearchModel {
 public:
  virtual ~SearchModel() = default;
  /// Runs one forward+backward exchange; counts one round when communicating.
  virtual ExchangeResult exchange(const ExchangeSpec& spec) = 0;
  virtual std::vector<ParamRef> params(ParamGroup group) = 0;
  virtual std::uint64_t rounds() const = 0;
};

struct StepReport {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double info_loss = 0.0;
  double weight_grad_norm = 0.0;
  double arch_grad_norm = 0.0;
  std::uint64_t rounds_used = 0;
};

/// Applies weight and arch optimizers to a SearchModel's parameters.
class NasOptimizer {
 public:
  explicit NasOptimizer(OptimConfig cfg);

  const OptimConfig& config() const noexcept { return cfg_; }
  void apply(SearchModel& model, ParamGroup group, const std::map<std::string, Tensor>& grads);

 private:
  OptimConfig cfg_;
  Sgd weights_;
  Sgd arch_;
};

StepReport bilevel_step(SearchModel& model, NasOptimizer& opt,
                        std::span<const std::size_t> batch_train,
                        std::span<const std::size_t> batch_val);

StepReport mixlevel_step(SearchModel& model, NasOptimizer& opt,
                         std::span<const std::size_t> batch_train,
                         std::span<const std::size_t> batch_val, double info_weight = 0.0);

/// Weight-only step on one batch (architecture fixed), one round.
StepReport weight_step(SearchModel& model, NasOptimizer& opt, std::span<const std::size_t> batch);

double grad_norm(const std::map<std::string, Tensor>& grads) noexcept;

}  // namespace ssvfnas::nas

#endif  // SSVFNAS_NAS_OPTIM_HPP

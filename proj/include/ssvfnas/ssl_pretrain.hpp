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

#ifndef SSVFNAS_SSL_PRETRAIN_HPP
#define SSVFNAS_SSL_PRETRAIN_HPP

// Momentum-contrast pre-search of one party's supernet on its local rows.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ssvfnas/autodiff.hpp"
#include "ssvfnas/search_space.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::ssl {

struct AugmentPolicy {
  double jitter = 0.1;
  double mask_prob = 0.1;
  void validate() const;
};

/// Two views x + N(0, jitter^2) with coordinates dropped independently. View 1 draws first.
std::pair<Tensor, Tensor> augment(const Tensor& x, const AugmentPolicy& policy,
                                  std::mt19937_64& rng);

struct MocoConfig {
  std::size_t queue = 1024;
  double momentum = 0.999;
  double tau = 0.2;
  std::vector<std::size_t> head{64, 32};
  double lr = 0.01;
  double sgd_momentum = 0.9;
  std::size_t batch = 32;
  AugmentPolicy augment;
  void validate() const;
};

/// -log softmax of the positive among {k+} and the queue, for L2-normalized vectors.
double info_nce(std::span<const double> q, std::span<const double> k_plus,
                const std::vector<std::vector<double>>& queue, double tau);

/// Batched InfoNCE: rows of q against their own row of k_pos and every queue row.
/// Mean over rows. `queue` is n x d and may have zero rows.
ad::Var info_nce_loss(ad::Var q, const Tensor& k_pos, const Tensor& queue, double tau);

/// key <- m key + (1 - m) query, elementwise.
void momentum_update(Tensor& key, const Tensor& query, double m);
void momentum_update(ad::ParamSet& key, const ad::ParamSet& query, double m);

/// FIFO of normalized key rows; the oldest are evicted beyond capacity.
class KeyQueue {
 public:
  explicit KeyQueue(std::size_t capacity = 1024);
  void push(const Tensor& keys);
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  /// size() x d, oldest first. d is 0 while empty.
  Tensor matrix() const;
  std::vector<std::vector<double>> rows() const { return {rows_.begin(), rows_.end()}; }

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> rows_;
};

/// Projection head parameters, named "l{i}/W", "l{i}/b".
ad::ParamSet make_head(std::size_t in_dim, const std::vector<std::size_t>& widths,
                       std::uint64_t seed);
/// relu between layers, none after the last.
ad::Var head_forward(const std::map<std::string, ad::Var>& head, std::size_t layers, ad::Var x);

struct MocoState {
  MocoConfig cfg;
  ad::ParamSet head_q;
  ad::ParamSet head_k;
  ad::ParamSet net_k;
  Tensor alpha_k;
  KeyQueue queue;

  /// Key encoder starts as an exact copy of the query encoder.
  MocoState(const nas::Supernet& net, const nas::ArchParams& arch, MocoConfig cfg,
            std::uint64_t seed);

  /// Key-encoder embedding: normalized rows, no gradient.
  Tensor keys(const nas::Supernet& net, const Tensor& x) const;
  void momentum_from(const nas::Supernet& net, const nas::ArchParams& arch);
};

struct InfoGrads {
  double loss = 0.0;
  ad::ParamSet net;     // supernet weight names
  Tensor alpha;         // E x |O|
  ad::ParamSet head;    // head_q names
  Tensor keys;          // keys of this batch, for enqueueing after the step
};

/// InfoNCE gradients of the query encoder on one batch. Leaves the queue untouched.
InfoGrads info_grads(const nas::Supernet& net, const nas::ArchParams& arch,
                     const MocoState& state, const Tensor& x, std::mt19937_64& rng);

struct PretrainResult {
  std::vector<double> loss_history;  // one per batch
};

/// Descends InfoNCE on both the supernet weights and alpha. Sends nothing.
/// An empty queue is first filled with key-encoder embeddings of the shard.
PretrainResult pretrain_party(nas::Supernet& net, nas::ArchParams& arch, MocoState& state,
                              const Tensor& shard, std::size_t epochs, std::mt19937_64& rng);

/// Checkpoint: <stem>.bin holds the tensors in wire encoding, <stem>.json the manifest.
void save_checkpoint(const std::filesystem::path& stem, const nas::Supernet& net,
                     const nas::ArchParams& arch, const nlohmann::json& meta);
void load_checkpoint(const std::filesystem::path& stem, nas::Supernet& net,
                     nas::ArchParams& arch);

}  // namespace ssvfnas::ssl

#endif  // SSVFNAS_SSL_PRETRAIN_HPP

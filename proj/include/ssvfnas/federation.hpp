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

#ifndef SSVFNAS_FEDERATION_HPP
#define SSVFNAS_FEDERATION_HPP

// Split-network protocol between K parties. Parties 1..K-1 are passive and send their
// embeddings N_j; party K holds the labels and the head Net_c and returns dl/dN_j.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ssvfnas/autodiff.hpp"
#include "ssvfnas/dp.hpp"
#include "ssvfnas/nas_optim.hpp"
#include "ssvfnas/search_space.hpp"
#include "ssvfnas/ssl_pretrain.hpp"
#include "ssvfnas/transport.hpp"
#include "ssvfnas/wire.hpp"

namespace ssvfnas::fed {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FederationConfig {
  std::size_t supernet_nodes = 3;
  std::size_t hidden = 32;
  std::size_t embed_dim = 64;
  nas::OpSet opset = nas::OpSet::defaults();
  std::vector<std::size_t> head_hidden{512, 128};
  dp::DpConfig dp;
  wire::Dtype wire_dtype = wire::Dtype::f32;
  transport::Mode transport = transport::Mode::in_process;
  ssl::MocoConfig moco;

  void validate() const;
};

struct PartyState {
  std::uint16_t id = 0;
  Tensor features;  // every row of this party's shard, indexed by sample id
  nas::Supernet net;
  nas::ArchParams arch;
  std::optional<nas::DiscreteArch> discrete;
  std::optional<ssl::MocoState> moco;
  std::mt19937_64 forward_noise;
  std::mt19937_64 backward_noise;  // drawn by party K for the link to this party
  std::mt19937_64 augment;
};

/// Labels per task and the head Net_c. Only party K owns this.
struct LabelState {
  std::vector<std::vector<int>> labels;  // [task][sample], -1 where unlabeled
  std::vector<std::size_t> classes;      // per task
  ad::ParamSet head;
};

struct RoundCounter {
  std::uint64_t search_rounds = 0;
  std::uint64_t eval_rounds = 0;
  std::uint64_t messages = 0;
  std::map<std::uint16_t, std::uint64_t> bytes_sent;

  std::uint64_t total_rounds() const noexcept { return search_rounds + eval_rounds; }
  std::uint64_t total_bytes() const noexcept;
};

/// Head parameters "l{i}/W|b" for the tanh layers and "out{t}/W|b" per task.
ad::ParamSet make_head_net(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                           const std::vector<std::size_t>& classes, std::uint64_t seed);
/// One logits Var per task.
std::vector<ad::Var> head_net_forward(const std::map<std::string, ad::Var>& head,
                                      std::size_t hidden_layers, std::size_t tasks, ad::Var z);

class Federation final : public nas::SearchModel {
 public:
  /// shards[k-1] belongs to party k; the last party holds `labels`.
  Federation(FederationConfig cfg, std::vector<Tensor> shards,
             std::vector<std::vector<int>> labels, std::vector<std::size_t> classes,
             std::uint64_t seed);
  ~Federation() override;

  nas::ExchangeResult exchange(const nas::ExchangeSpec& spec) override;
  std::vector<nas::ParamRef> params(nas::ParamGroup group) override;
  std::uint64_t rounds() const override { return counter_.search_rounds; }

  /// Forward-only pass; one round per batch when K >= 2. Returns [task][row] predictions.
  std::vector<std::vector<int>> predict(std::span<const std::size_t> rows, std::size_t batch);
  /// Mean over tasks of the fraction of correct predictions.
  double accuracy(std::span<const std::size_t> rows, std::size_t batch);

  /// Switches every party to its fixed architecture; alpha is no longer bound.
  void set_discrete(const std::vector<nas::DiscreteArch>& archs);
  std::vector<nas::DiscreteArch> discretize_all() const;
  /// Attaches a momentum-contrast state per party for the end-to-end info term.
  void enable_info(std::uint64_t seed);

  std::size_t num_parties() const noexcept { return parties_.size(); }
  std::uint16_t label_party() const noexcept { return static_cast<std::uint16_t>(parties_.size()); }
  PartyState& party(std::uint16_t id) { return parties_.at(id - 1); }
  const PartyState& party(std::uint16_t id) const { return parties_.at(id - 1); }
  LabelState& label_state() noexcept { return label_; }
  const LabelState& label_state() const noexcept { return label_; }

  const FederationConfig& config() const noexcept { return cfg_; }
  const RoundCounter& counter() const noexcept { return counter_; }
  const wire::Transcript& transcript() const noexcept { return transcript_; }
  const dp::PrivacyLedger& ledger() const noexcept { return ledger_; }

  static std::string weight_key(std::uint16_t party, const std::string& name);
  static std::string arch_key(std::uint16_t party);
  static std::string head_key(const std::string& name);
  static std::string proj_key(std::uint16_t party, const std::string& name);

 private:
  struct PassiveForward;

  ad::Var party_forward(ad::Graph& g, PartyState& p, std::span<const std::size_t> rows,
                        const std::string& prefix, bool with_arch);
  Tensor protect(const Tensor& t, std::uint16_t party, dp::Direction dir, std::uint32_t round);
  void send(std::uint16_t from, std::uint16_t to, wire::MsgType type, nas::Phase phase,
            std::uint32_t round, const Tensor& payload);
  wire::Message receive(std::uint16_t at, std::uint16_t from, wire::MsgType type,
                        nas::Phase phase, std::uint32_t round, std::size_t rows);
  void add_info_term(PartyState& p, std::span<const std::size_t> rows, double weight,
                     nas::ExchangeResult& out, bool want_weights, bool want_arch);

  FederationConfig cfg_;
  std::vector<PartyState> parties_;
  LabelState label_;
  std::unique_ptr<transport::Transport> transport_;
  RoundCounter counter_;
  wire::Transcript transcript_;
  dp::PrivacyLedger ledger_;
};

}  // namespace ssvfnas::fed

#endif  // SSVFNAS_FEDERATION_HPP

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

#include "ssvfnas/federation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssvfnas/rng.hpp"

namespace ssvfnas::fed {

namespace {

enum StreamTag : std::uint64_t {
  kSupernet = 11,
  kHead = 12,
  kForwardNoise = 13,
  kBackwardNoise = 14,
  kAugment = 15,
  kProjection = 16,
};

void accumulate(std::map<std::string, Tensor>& into, const std::string& key, const Tensor& g,
                double weight) {
  auto it = into.find(key);
  if (it == into.end()) {
    Tensor scaled = g;
    for (double& v : scaled.data()) v *= weight;
    into.emplace(key, std::move(scaled));
    return;
  }
  auto dst = it->second.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
}

}  // namespace

void FederationConfig::validate() const {
  if (supernet_nodes < 2) throw std::invalid_argument("supernet needs at least 2 nodes");
  if (hidden == 0 || embed_dim == 0) throw std::invalid_argument("supernet widths must be >= 1");
  opset.validate();
  dp.validate();
  moco.validate();
}

std::uint64_t RoundCounter::total_bytes() const noexcept {
  std::uint64_t s = 0;
  for (const auto& [k, b] : bytes_sent) s += b;
  return s;
}

ad::ParamSet make_head_net(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                           const std::vector<std::size_t>& classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::ParamSet head;
  auto layer = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-s, s);
    Tensor w(Shape{fan_in, fan_out});
    for (double& v : w.data()) v = u(rng);
    Tensor b(Shape{fan_out});
    for (double& v : b.data()) v = u(rng);
    head.emplace(name + "/W", std::move(w));
    head.emplace(name + "/b", std::move(b));
  };
  std::size_t fan_in = in_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layer("l" + std::to_string(i), fan_in, hidden[i]);
    fan_in = hidden[i];
  }
  for (std::size_t t = 0; t < classes.size(); ++t) layer("out" + std::to_string(t), fan_in, classes[t]);
  return head;
}

std::vector<ad::Var> head_net_forward(const std::map<std::string, ad::Var>& head,
                                      std::size_t hidden_layers, std::size_t tasks, ad::Var z) {
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    const std::string l = "l" + std::to_string(i);
    z = ad::tanh(ad::add_bias(ad::matmul(z, head.at(l + "/W")), head.at(l + "/b")));
  }
  std::vector<ad::Var> logits;
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::string o = "out" + std::to_string(t);
    logits.push_back(ad::add_bias(ad::matmul(z, head.at(o + "/W")), head.at(o + "/b")));
  }
  return logits;
}

std::string Federation::weight_key(std::uint16_t party, const std::string& name) {
  return "p" + std::to_string(party) + "/" + name;
}
std::string Federation::arch_key(std::uint16_t party) {
  return "p" + std::to_string(party) + "/alpha";
}
std::string Federation::head_key(const std::string& name) { return "head/" + name; }
std::string Federation::proj_key(std::uint16_t party, const std::string& name) {
  return "p" + std::to_string(party) + "/proj/" + name;
}

Federation::Federation(FederationConfig cfg, std::vector<Tensor> shards,
                       std::vector<std::vector<int>> labels, std::vector<std::size_t> classes,
                       std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (shards.empty()) throw std::invalid_argument("federation needs at least one party");
  if (labels.empty() || labels.size() != classes.size()) {
    throw std::invalid_argument("federation needs one class count per label task");
  }
  const std::size_t n = shards.front().rows();
  for (const auto& task : labels) {
    if (task.size() != n) throw ShapeError("label vector length differs from shard rows");
  }
  for (std::size_t k = 1; k <= shards.size(); ++k) {
    Tensor& x = shards[k - 1];
    if (x.rank() != 2 || x.rows() != n) throw ShapeError("shards must share their row count");
    const auto id = static_cast<std::uint16_t>(k);
    auto [net, arch] = nas::Supernet::build(cfg_.supernet_nodes, cfg_.hidden, x.cols(),
                                            cfg_.embed_dim, cfg_.opset,
                                            derive_seed(seed, {kSupernet, k}));
    parties_.push_back(PartyState{id, std::move(x), std::move(net), std::move(arch), std::nullopt,
                                  std::nullopt, make_rng(seed, {kForwardNoise, k}),
                                  make_rng(seed, {kBackwardNoise, k}), make_rng(seed, {kAugment, k})});
  }
  label_.labels = std::move(labels);
  label_.classes = std::move(classes);
  label_.head = make_head_net(cfg_.embed_dim * parties_.size(), cfg_.head_hidden, label_.classes,
                              derive_seed(seed, {kHead}));

  std::vector<std::uint16_t> passive;
  for (std::size_t k = 1; k < parties_.size(); ++k) passive.push_back(static_cast<std::uint16_t>(k));
  transport_ = transport::make_transport(cfg_.transport, label_party(), passive);
}

Federation::~Federation() = default;

void Federation::enable_info(std::uint64_t seed) {
  for (PartyState& p : parties_) {
    if (!p.moco) p.moco.emplace(p.net, p.arch, cfg_.moco, derive_seed(seed, {kProjection, p.id}));
  }
}

void Federation::set_discrete(const std::vector<nas::DiscreteArch>& archs) {
  if (archs.size() != parties_.size()) throw std::invalid_argument("one architecture per party");
  for (std::size_t k = 0; k < parties_.size(); ++k) {
    nas::validate_discrete(archs[k], parties_[k].net);
    parties_[k].discrete = archs[k];
  }
}

std::vector<nas::DiscreteArch> Federation::discretize_all() const {
  std::vector<nas::DiscreteArch> out;
  for (const PartyState& p : parties_) out.push_back(nas::discretize(p.arch, p.net));
  return out;
}

std::vector<nas::ParamRef> Federation::params(nas::ParamGroup group) {
  std::vector<nas::ParamRef> out;
  if (group == nas::ParamGroup::arch) {
    for (PartyState& p : parties_) {
      if (!p.discrete) out.push_back({arch_key(p.id), &p.arch.alpha});
    }
    return out;
  }
  for (PartyState& p : parties_) {
    for (auto& [name, t] : p.net.weights()) out.push_back({weight_key(p.id, name), &t});
    if (p.moco) {
      for (auto& [name, t] : p.moco->head_q) out.push_back({proj_key(p.id, name), &t});
    }
  }
  for (auto& [name, t] : label_.head) out.push_back({head_key(name), &t});
  return out;
}

ad::Var Federation::party_forward(ad::Graph& g, PartyState& p, std::span<const std::size_t> rows,
                                  const std::string& prefix, bool with_arch) {
  const bool soft = !p.discrete;
  if (with_arch && !soft) throw std::logic_error("alpha gradients requested in discrete mode");
  nas::BoundSupernet bound = nas::bind_supernet(g, p.net, soft ? &p.arch : nullptr, prefix, true);
  ad::Var x = g.constant(p.features.gather_rows(rows));
  ad::Var out = soft ? nas::soft_forward(bound, x) : nas::hard_forward(bound, *p.discrete, x);
  if (out.value().cols() != cfg_.embed_dim) {
    throw ProtocolError("party " + std::to_string(p.id) + " embedding width " +
                        std::to_string(out.value().cols()) + " breaks the " +
                        std::to_string(cfg_.embed_dim) + "-dim contract");
  }
  return out;
}

Tensor Federation::protect(const Tensor& t, std::uint16_t party, dp::Direction dir,
                           std::uint32_t round) {
  if (!cfg_.dp.enabled) return t;
  PartyState& p = this->party(party);
  const bool fwd = dir == dp::Direction::forward;
  const double clip = fwd ? cfg_.dp.clip_forward : cfg_.dp.clip_backward;
  const double sigma = fwd ? cfg_.dp.sigma_forward : cfg_.dp.sigma_backward;
  ledger_.record(party, dir, sigma, clip, round);
  return dp::clip_and_noise(t, clip, sigma, fwd ? p.forward_noise : p.backward_noise);
}

void Federation::send(std::uint16_t from, std::uint16_t to, wire::MsgType type, nas::Phase phase,
                      std::uint32_t round, const Tensor& payload) {
  wire::Message m;
  m.type = type;
  m.phase = phase;
  m.dtype = cfg_.wire_dtype;
  m.round = round;
  m.sender = from;
  m.payload = payload;
  const wire::Bytes bytes = wire::encode(m);
  counter_.bytes_sent[from] += bytes.size();
  ++counter_.messages;
  transport_->send(from, to, bytes);
}

wire::Message Federation::receive(std::uint16_t at, std::uint16_t from, wire::MsgType type,
                                  nas::Phase phase, std::uint32_t round, std::size_t rows) {
  const wire::Bytes bytes = transport_->receive(at, from);
  wire::Message m = wire::decode(bytes);
  transcript_.record(m, bytes.size());
  if (m.type != type) throw ProtocolError("unexpected message type from party " + std::to_string(from));
  if (m.sender != from) throw ProtocolError("sender field does not match the link");
  if (m.phase != phase) throw ProtocolError("phase mismatch on message from party " + std::to_string(from));
  if (m.round != round) throw ProtocolError("round mismatch on message from party " + std::to_string(from));
  if (m.payload.rank() != 2 || m.payload.rows() != rows || m.payload.cols() != cfg_.embed_dim) {
    throw ProtocolError("payload " + shape_string(m.payload.shape()) + " violates the embedding contract");
  }
  return m;
}

void Federation::add_info_term(PartyState& p, std::span<const std::size_t> rows, double weight,
                               nas::ExchangeResult& out, bool want_weights, bool want_arch) {
  if (!p.moco) throw std::logic_error("info term requested without enable_info");
  ssl::MocoState& st = *p.moco;
  // The key encoder trails the query encoder as it stands after the previous step.
  st.momentum_from(p.net, p.arch);
  ssl::momentum_update(st.head_k, st.head_q, st.cfg.momentum);
  ssl::InfoGrads g = ssl::info_grads(p.net, p.arch, st, p.features.gather_rows(rows), p.augment);
  if (want_weights) {
    for (const auto& [name, t] : g.net) accumulate(out.weight_grads, weight_key(p.id, name), t, weight);
    for (const auto& [name, t] : g.head) accumulate(out.weight_grads, proj_key(p.id, name), t, weight);
  }
  if (want_arch) accumulate(out.arch_grads, arch_key(p.id), g.alpha, weight);
  out.info_loss += g.loss;
  st.queue.push(g.keys);
}

nas::ExchangeResult Federation::exchange(const nas::ExchangeSpec& spec) {
  if (spec.primary.empty()) throw std::invalid_argument("exchange with an empty batch");
  if (spec.phase == nas::Phase::eval) throw std::invalid_argument("use predict() for evaluation");
  if (!spec.want_weights && !spec.want_arch) throw std::invalid_argument("exchange wants nothing");
  const std::size_t n1 = spec.primary.size(), n2 = spec.secondary.size();
  std::vector<std::size_t> rows(spec.primary.begin(), spec.primary.end());
  rows.insert(rows.end(), spec.secondary.begin(), spec.secondary.end());
  const std::uint16_t K = label_party();
  const auto round = static_cast<std::uint32_t>(counter_.total_rounds());
  nas::ExchangeResult out;

  // Passive forward.
  std::vector<std::unique_ptr<ad::Graph>> graphs;
  std::vector<ad::Var> embeds;
  for (std::uint16_t j = 1; j < K; ++j) {
    graphs.push_back(std::make_unique<ad::Graph>());
    embeds.push_back(party_forward(*graphs.back(), party(j), rows, "", spec.want_arch));
    send(j, K, wire::MsgType::fwd_act, spec.phase, round,
         protect(embeds.back().value(), j, dp::Direction::forward, round));
  }

  // Label party: merge, head, losses.
  ad::Graph gk;
  std::vector<ad::Var> parts;
  for (std::uint16_t j = 1; j < K; ++j) {
    Tensor t = receive(K, j, wire::MsgType::fwd_act, spec.phase, round, rows.size()).payload;
    parts.push_back(gk.input(std::move(t.set_requires_grad())));
  }
  parts.push_back(party_forward(gk, party(K), rows, "net/", spec.want_arch));
  std::map<std::string, ad::Var> head;
  for (const auto& [name, t] : label_.head) head.emplace(name, gk.param("head/" + name, t));
  const std::vector<ad::Var> logits =
      head_net_forward(head, cfg_.head_hidden.size(), label_.classes.size(), ad::concat_cols(parts));

  auto task_loss = [&](std::span<const std::size_t> idx, std::size_t begin) {
    std::optional<ad::Var> total;
    for (std::size_t t = 0; t < logits.size(); ++t) {
      std::vector<int> y;
      for (std::size_t i : idx) {
        const int label = label_.labels[t].at(i);
        if (label < 0) throw std::logic_error("sample " + std::to_string(i) + " has no label");
        y.push_back(label);
      }
      ad::Var ce = ad::cross_entropy(ad::slice_rows(logits[t], begin, begin + idx.size()), y);
      total = total ? *total + ce : ce;
    }
    return *total;
  };
  const ad::Var primary = task_loss(spec.primary, 0);
  out.primary_loss = primary.value().item();
  std::optional<ad::Var> secondary;
  if (n2 > 0) {
    secondary = task_loss(spec.secondary, n1);
    out.secondary_loss = secondary->value().item();
  }
  if (!std::isfinite(out.primary_loss) || !std::isfinite(out.secondary_loss)) {
    throw NumericError("non-finite loss at round " + std::to_string(round));
  }

  std::optional<ad::Gradients> gw, ga;
  if (spec.want_weights) gw = gk.backward(primary);
  if (spec.want_arch) {
    if (secondary) {
      ga = gk.backward(primary + ad::scale(*secondary, spec.secondary_weight));
    } else if (gw) {
      ga = gw;
    } else {
      ga = gk.backward(primary);
    }
  }
  PartyState& pk = party(K);
  if (gw) {
    for (const auto& [name, t] : pk.net.weights()) out.weight_grads.emplace(weight_key(K, name), (*gw)["net/" + name]);
    for (const auto& [name, t] : label_.head) out.weight_grads.emplace(head_key(name), (*gw)["head/" + name]);
  }
  if (ga) out.arch_grads.emplace(arch_key(K), nas::gather_alpha_grad(*ga, pk.net, "net/"));

  // The returned gradient covers what the passive side needs: rows of the primary batch
  // carry dP/dN, rows of the secondary batch carry lambda dS/dN.
  const ad::Gradients& to_send = ga ? *ga : *gw;
  for (std::uint16_t j = 1; j < K; ++j) {
    send(K, j, wire::MsgType::bwd_grad, spec.phase, round,
         protect(to_send.wrt(parts[j - 1]), j, dp::Direction::backward, round));
  }

  // Passive backward, seeded with the received gradient.
  for (std::uint16_t j = 1; j < K; ++j) {
    const Tensor g = receive(j, K, wire::MsgType::bwd_grad, spec.phase, round, rows.size()).payload;
    ad::Graph& gj = *graphs[j - 1];
    const ad::Var nj = embeds[j - 1];
    PartyState& pj = party(j);
    std::optional<ad::Gradients> pw;
    if (spec.want_weights) {
      Tensor seed = g;
      std::fill(seed.data().begin() + static_cast<std::ptrdiff_t>(n1 * seed.cols()), seed.data().end(), 0.0);
      pw = gj.backward(nj, seed);
      for (const auto& [name, t] : pj.net.weights()) out.weight_grads.emplace(weight_key(j, name), (*pw)[name]);
    }
    if (spec.want_arch) {
      const ad::Gradients pa = (pw && n2 == 0) ? *pw : gj.backward(nj, g);
      out.arch_grads.emplace(arch_key(j), nas::gather_alpha_grad(pa, pj.net, ""));
    }
  }

  if (spec.info_weight != 0.0) {
    for (PartyState& p : parties_) {
      add_info_term(p, spec.primary, spec.info_weight, out, spec.want_weights, spec.want_arch);
    }
  }
  if (K >= 2) ++counter_.search_rounds;
  return out;
}

std::vector<std::vector<int>> Federation::predict(std::span<const std::size_t> rows,
                                                  std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("predict batch must be >= 1");
  const std::uint16_t K = label_party();
  std::vector<std::vector<int>> preds(label_.classes.size());
  for (std::size_t start = 0; start < rows.size(); start += batch) {
    const auto chunk = rows.subspan(start, std::min(batch, rows.size() - start));
    const auto round = static_cast<std::uint32_t>(counter_.total_rounds());
    for (std::uint16_t j = 1; j < K; ++j) {
      ad::Graph g;
      Tensor n = party_forward(g, party(j), chunk, "", false).value();
      if (cfg_.dp.noise_at_eval) n = protect(n, j, dp::Direction::forward, round);
      send(j, K, wire::MsgType::fwd_act, nas::Phase::eval, round, n);
    }
    ad::Graph gk;
    std::vector<ad::Var> parts;
    for (std::uint16_t j = 1; j < K; ++j) {
      parts.push_back(gk.constant(receive(K, j, wire::MsgType::fwd_act, nas::Phase::eval, round, chunk.size()).payload));
    }
    parts.push_back(party_forward(gk, party(K), chunk, "net/", false));
    std::map<std::string, ad::Var> head;
    for (const auto& [name, t] : label_.head) head.emplace(name, gk.constant(t));
    const auto logits =
        head_net_forward(head, cfg_.head_hidden.size(), label_.classes.size(), ad::concat_cols(parts));
    for (std::size_t t = 0; t < logits.size(); ++t) {
      const Tensor& z = logits[t].value();
      for (std::size_t r = 0; r < z.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < z.cols(); ++c) {
          if (z.at(r, c) > z.at(r, best)) best = c;
        }
        preds[t].push_back(static_cast<int>(best));
      }
    }
    if (K >= 2) ++counter_.eval_rounds;
  }
  return preds;
}

double Federation::accuracy(std::span<const std::size_t> rows, std::size_t batch) {
  if (rows.empty()) throw std::invalid_argument("accuracy over an empty set");
  const auto preds = predict(rows, batch);
  double acc = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int y = label_.labels[t].at(rows[i]);
      if (y < 0) throw std::logic_error("accuracy over an unlabeled sample");
      hit += preds[t][i] == y;
    }
    acc += static_cast<double>(hit) / static_cast<double>(rows.size());
  }
  return acc / static_cast<double>(preds.size());
}

}  // namespace ssvfnas::fed

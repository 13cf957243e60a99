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

#include "ssvfnas/ssl_pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ssvfnas/nas_optim.hpp"
#include "ssvfnas/wire.hpp"

namespace ssvfnas::ssl {

void AugmentPolicy::validate() const {
  if (!(jitter >= 0.0)) throw std::invalid_argument("augment jitter must be >= 0");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw std::invalid_argument("augment mask probability must lie in [0, 1]");
  }
}

std::pair<Tensor, Tensor> augment(const Tensor& x, const AugmentPolicy& policy,
                                  std::mt19937_64& rng) {
  policy.validate();
  auto view = [&] {
    Tensor v = x;
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& c : v.data()) {
      if (policy.jitter > 0.0) c += policy.jitter * jitter(rng);
      if (policy.mask_prob > 0.0 && u(rng) < policy.mask_prob) c = 0.0;
    }
    return v;
  };
  Tensor a = view();
  Tensor b = view();
  return {std::move(a), std::move(b)};
}

void MocoConfig::validate() const {
  if (queue == 0) throw std::invalid_argument("moco queue capacity must be >= 1");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("moco m must be in [0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("moco temperature must be > 0");
  if (head.empty()) throw std::invalid_argument("projection head needs at least one layer");
  if (!(lr >= 0.0) || !(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) {
    throw std::invalid_argument("bad pretrain optimizer settings");
  }
  if (batch == 0) throw std::invalid_argument("pretrain batch must be >= 1");
  augment.validate();
}

double info_nce(std::span<const double> q, std::span<const double> k_plus,
                const std::vector<std::vector<double>>& queue, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be > 0");
  if (q.size() != k_plus.size()) throw ShapeError("info_nce: q and k+ differ in length");
  auto dotp = [&](std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("info_nce: key length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto require_nonzero = [&](std::span<const double> v) {
    if (dotp(v, v) == 0.0) throw NumericError("info_nce: zero-norm vector");
  };
  require_nonzero(q);
  require_nonzero(k_plus);
  std::vector<double> logits{dotp(q, k_plus) / tau};
  for (const auto& k : queue) {
    require_nonzero(k);
    logits.push_back(dotp(q, k) / tau);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s) - logits.front();
}

ad::Var info_nce_loss(ad::Var q, const Tensor& k_pos, const Tensor& queue, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce_loss: tau must be > 0");
  ad::Graph& g = *q.graph();
  std::vector<ad::Var> parts{ad::row_dot(q, g.constant(k_pos))};
  if (queue.size() > 0) {
    const std::size_t n = queue.rows(), d = queue.cols();
    Tensor qt(Shape{d, n});
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) qt.at(c, r) = queue.at(r, c);
    }
    parts.push_back(ad::matmul(q, g.constant(std::move(qt))));
  }
  ad::Var logits = ad::scale(ad::concat_cols(parts), 1.0 / tau);
  const std::vector<int> positive(q.value().rows(), 0);
  return ad::cross_entropy(logits, positive);
}

void momentum_update(Tensor& key, const Tensor& query, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("momentum_update: m outside [0, 1]");
  require_same_shape(key, query, "momentum_update");
  if (m == 1.0) return;
  if (m == 0.0) {
    key = query;
    return;
  }
  auto k = key.data();
  auto q = query.data();
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
}

void momentum_update(ad::ParamSet& key, const ad::ParamSet& query, double m) {
  if (key.size() != query.size()) throw ShapeError("momentum_update: parameter sets differ");
  for (auto& [name, k] : key) {
    auto it = query.find(name);
    if (it == query.end()) throw ShapeError("momentum_update: query lacks " + name);
    momentum_update(k, it->second, m);
  }
}

KeyQueue::KeyQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("key queue capacity must be >= 1");
}

void KeyQueue::push(const Tensor& keys) {
  if (keys.rank() != 2) throw ShapeError("key queue expects a matrix of keys");
  if (!rows_.empty() && rows_.front().size() != keys.cols()) {
    throw ShapeError("key width changed");
  }
  for (std::size_t r = 0; r < keys.rows(); ++r) {
    auto row = keys.data().subspan(r * keys.cols(), keys.cols());
    rows_.emplace_back(row.begin(), row.end());
    if (rows_.size() > capacity_) rows_.pop_front();
  }
}

Tensor KeyQueue::matrix() const {
  if (rows_.empty()) return Tensor(Shape{0, 0});
  const std::size_t d = rows_.front().size();
  std::vector<double> flat;
  flat.reserve(rows_.size() * d);
  for (const auto& r : rows_) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor(Shape{rows_.size(), d}, std::move(flat));
}

ad::ParamSet make_head(std::size_t in_dim, const std::vector<std::size_t>& widths,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::ParamSet head;
  std::size_t fan_in = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-s, s);
    Tensor w(Shape{fan_in, widths[i]});
    for (double& v : w.data()) v = u(rng);
    Tensor b(Shape{widths[i]});
    for (double& v : b.data()) v = u(rng);
    head.emplace("l" + std::to_string(i) + "/W", std::move(w));
    head.emplace("l" + std::to_string(i) + "/b", std::move(b));
    fan_in = widths[i];
  }
  return head;
}

ad::Var head_forward(const std::map<std::string, ad::Var>& head, std::size_t layers, ad::Var x) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string l = "l" + std::to_string(i);
    x = ad::add_bias(ad::matmul(x, head.at(l + "/W")), head.at(l + "/b"));
    if (i + 1 < layers) x = ad::relu(x);
  }
  return x;
}

MocoState::MocoState(const nas::Supernet& net, const nas::ArchParams& arch, MocoConfig c,
                     std::uint64_t seed)
    : cfg(std::move(c)),
      head_q(make_head(net.out_dim(), cfg.head, seed)),
      head_k(head_q),
      net_k(net.weights()),
      alpha_k(arch.alpha),
      queue(cfg.queue) {
  cfg.validate();
}

namespace {

std::map<std::string, ad::Var> bind_head(ad::Graph& g, const ad::ParamSet& head, bool train) {
  std::map<std::string, ad::Var> out;
  for (const auto& [name, t] : head) {
    out.emplace(name, train ? g.param("proj/" + name, t) : g.constant(t));
  }
  return out;
}

}  // namespace

Tensor MocoState::keys(const nas::Supernet& net, const Tensor& x) const {
  // A key-encoder copy of the topology carrying the key weights.
  nas::Supernet key_net = net;
  key_net.weights() = net_k;
  nas::ArchParams key_arch{alpha_k};
  ad::Graph g;
  nas::BoundSupernet bound = nas::bind_supernet(g, key_net, &key_arch, "", false);
  // Alpha rows are bound as params by bind_supernet; no backward is ever run on this graph.
  ad::Var emb = nas::soft_forward(bound, g.constant(x));
  ad::Var k = ad::normalize_rows(head_forward(bind_head(g, head_k, false), cfg.head.size(), emb));
  return k.value();
}

void MocoState::momentum_from(const nas::Supernet& net, const nas::ArchParams& arch) {
  momentum_update(net_k, net.weights(), cfg.momentum);
  momentum_update(alpha_k, arch.alpha, cfg.momentum);
  // head_q is updated by whoever owns the optimizer; head_k trails it here.
}

InfoGrads info_grads(const nas::Supernet& net, const nas::ArchParams& arch,
                     const MocoState& state, const Tensor& x, std::mt19937_64& rng) {
  auto [v1, v2] = augment(x, state.cfg.augment, rng);
  InfoGrads out;
  out.keys = state.keys(net, v2);

  ad::Graph g;
  nas::BoundSupernet bound = nas::bind_supernet(g, net, &arch, "net/", true);
  ad::Var emb = nas::soft_forward(bound, g.constant(std::move(v1)));
  ad::Var q = ad::normalize_rows(
      head_forward(bind_head(g, state.head_q, true), state.cfg.head.size(), emb));
  ad::Var loss = info_nce_loss(q, out.keys, state.queue.matrix(), state.cfg.tau);
  out.loss = loss.value().item();

  const ad::Gradients grads = g.backward(loss);
  for (const auto& [name, t] : net.weights()) out.net.emplace(name, grads["net/" + name]);
  out.alpha = nas::gather_alpha_grad(grads, net, "net/");
  for (const auto& [name, t] : state.head_q) out.head.emplace(name, grads["proj/" + name]);
  return out;
}

PretrainResult pretrain_party(nas::Supernet& net, nas::ArchParams& arch, MocoState& state,
                              const Tensor& shard, std::size_t epochs, std::mt19937_64& rng) {
  if (shard.rank() != 2 || shard.rows() == 0) throw std::invalid_argument("pretrain: empty shard");
  if (shard.cols() != net.in_dim()) throw ShapeError("pretrain: shard width != supernet input");
  PretrainResult result;
  nas::Sgd sgd({state.cfg.lr, state.cfg.sgd_momentum});
  std::vector<std::size_t> order(shard.rows());
  if (epochs > 0 && state.queue.size() == 0) {
    // Prime the negatives with the party's own keys so the loss starts at its working scale.
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n = std::min(order.size(), state.queue.capacity());
    state.queue.push(state.keys(net, shard.gather_rows(std::span(order).first(n))));
  }
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += state.cfg.batch) {
      const std::size_t end = std::min(order.size(), start + state.cfg.batch);
      const Tensor x = shard.gather_rows(std::span(order).subspan(start, end - start));
      InfoGrads g = info_grads(net, arch, state, x, rng);
      if (!std::isfinite(g.loss)) throw NumericError("pretrain: non-finite InfoNCE loss");
      result.loss_history.push_back(g.loss);

      for (auto& [name, t] : net.weights()) sgd.step("net/" + name, t, g.net.at(name));
      sgd.step("alpha", arch.alpha, g.alpha);
      for (auto& [name, t] : state.head_q) sgd.step("proj/" + name, t, g.head.at(name));

      state.momentum_from(net, arch);
      momentum_update(state.head_k, state.head_q, state.cfg.momentum);
      state.queue.push(g.keys);
    }
  }
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'F', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const nas::Supernet& net,
                     const nas::ArchParams& arch, const nlohmann::json& meta) {
  ad::ParamSet all = net.weights();
  all.emplace("alpha", arch.alpha);
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());
  out.write(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : all) {
    wire::Message m;
    m.type = wire::MsgType::ctrl;
    m.dtype = wire::Dtype::f64;
    m.payload = t;
    const wire::Bytes frame = wire::encode(m);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(frame.size()));
    out.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
  }
  if (!out) throw std::runtime_error("write failed for " + bin.string());

  std::filesystem::path manifest = stem;
  manifest += ".json";
  std::ofstream js(manifest);
  js << nlohmann::json{{"format", "ssvfnas-checkpoint"},
                       {"version", kCheckpointVersion},
                       {"blob", bin.filename().string()},
                       {"tensors", tensors},
                       {"meta", meta}}
            .dump(2)
     << '\n';
  if (!js) throw std::runtime_error("write failed for " + manifest.string());
}

void load_checkpoint(const std::filesystem::path& stem, nas::Supernet& net,
                     nas::ArchParams& arch) {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + bin.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint: " + bin.string());
  }
  if (get<std::uint32_t>(in) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  const auto count = get<std::uint32_t>(in);
  ad::ParamSet loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint16_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    wire::Bytes frame(get<std::uint32_t>(in));
    in.read(reinterpret_cast<char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    if (!in) throw std::runtime_error("checkpoint truncated");
    loaded.emplace(name, wire::decode(frame).payload);
  }
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw std::runtime_error("checkpoint lacks " + name);
    require_same_shape(dst, it->second, "load_checkpoint");
    dst = it->second;
  };
  for (auto& [name, t] : net.weights()) take(name, t);
  take("alpha", arch.alpha);
}

}  // namespace ssvfnas::ssl

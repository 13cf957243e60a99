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

#include "ssvfnas/wire.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace ssvfnas::wire {

static_assert(std::endian::native == std::endian::little,
              "the codec copies reals bytewise and assumes a little-endian host");

const char* msg_type_name(MsgType t) noexcept {
  switch (t) {
    case MsgType::fwd_act: return "FWD_ACT";
    case MsgType::bwd_grad: return "BWD_GRAD";
    case MsgType::ctrl: return "CTRL";
  }
  return "?";
}

namespace {

template <typename T>
void put(Bytes& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <typename T>
  T get() {
    if (b_.size() - pos_ < sizeof(T)) throw DecodeError("truncated message");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void check_header(const Message& m) {
  if (m.type != MsgType::fwd_act && m.type != MsgType::bwd_grad && m.type != MsgType::ctrl) {
    throw std::invalid_argument("unknown message type");
  }
  if (static_cast<int>(m.phase) > 2) throw std::invalid_argument("unknown phase");
  if (m.dtype != Dtype::f32 && m.dtype != Dtype::f64) throw std::invalid_argument("unknown dtype");
  if (m.payload.rank() > 255) throw std::invalid_argument("payload rank exceeds 255");
  for (std::size_t d : m.payload.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw std::invalid_argument("payload extent exceeds u32");
    }
  }
}

}  // namespace

std::size_t encoded_size(const Message& m) {
  return kHeaderBytes + 1 + 4 * m.payload.rank() +
         m.payload.size() * static_cast<std::size_t>(m.dtype);
}

Bytes encode(const Message& m) {
  check_header(m);
  Bytes out;
  out.reserve(encoded_size(m));
  put<std::uint32_t>(out, kMagic);
  put<std::uint8_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.type));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.phase));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.dtype));
  put<std::uint32_t>(out, m.round);
  put<std::uint16_t>(out, m.sender);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(m.payload.rank()));
  for (std::size_t d : m.payload.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  if (m.dtype == Dtype::f32) {
    for (double v : m.payload.data()) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : m.payload.data()) put<double>(out, v);
  }
  return out;
}

Message decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get<std::uint32_t>() != kMagic) throw DecodeError("bad magic");
  if (r.get<std::uint8_t>() != kVersion) throw DecodeError("unsupported version");
  Message m;
  const auto type = r.get<std::uint8_t>();
  if (type < 1 || type > 3) throw DecodeError("unknown msg_type " + std::to_string(type));
  m.type = static_cast<MsgType>(type);
  const auto phase = r.get<std::uint8_t>();
  if (phase > 2) throw DecodeError("unknown phase " + std::to_string(phase));
  m.phase = static_cast<nas::Phase>(phase);
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != 4 && dtype != 8) throw DecodeError("unknown dtype " + std::to_string(dtype));
  m.dtype = static_cast<Dtype>(dtype);
  m.round = r.get<std::uint32_t>();
  m.sender = r.get<std::uint16_t>();

  const auto ndim = r.get<std::uint8_t>();
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = r.get<std::uint32_t>();
    count *= d;
  }
  if (count * dtype != r.remaining()) {
    throw DecodeError("payload length " + std::to_string(r.remaining()) + " does not match dims " +
                      shape_string(shape));
  }
  std::vector<double> data(count);
  if (m.dtype == Dtype::f32) {
    for (auto& v : data) v = r.get<float>();
  } else {
    for (auto& v : data) v = r.get<double>();
  }
  m.payload = Tensor(std::move(shape), std::move(data));
  return m;
}

Tensor round_trip(const Tensor& t, Dtype dtype) {
  if (dtype == Dtype::f64) return t;
  Tensor out = t;
  for (double& v : out.data()) v = static_cast<float>(v);
  return out;
}

nlohmann::json TranscriptEntry::to_json() const {
  return {{"round", round},
          {"sender", sender},
          {"type", msg_type_name(type)},
          {"phase", nas::phase_name(phase)},
          {"bytes", bytes},
          {"l2norm", l2norm}};
}

void Transcript::record(const Message& m, std::size_t bytes) {
  entries_.push_back({m.round, m.sender, m.type, m.phase, bytes, m.payload.l2_norm()});
}

std::string Transcript::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

std::uint64_t Transcript::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : to_jsonl()) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ssvfnas::wire

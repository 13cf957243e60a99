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

#ifndef SSVFNAS_WIRE_HPP
#define SSVFNAS_WIRE_HPP

// Binary message format shared by every transport, and the receive-side transcript.
//
// Layout, little-endian:
//   u32 magic | u8 version | u8 msg_type | u8 phase | u8 dtype | u32 round | u16 sender
//   u8 ndim | u32 dims[ndim] | payload (product(dims) reals of `dtype` bytes each)

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssvfnas/nas_optim.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::wire {

inline constexpr std::uint32_t kMagic = 0x534E4656;  // "VFNS"
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 14;

using Bytes = std::vector<std::uint8_t>;

enum class MsgType : std::uint8_t { fwd_act = 1, bwd_grad = 2, ctrl = 3 };

/// Width of one payload real. f64 exists for equivalence runs only.
enum class Dtype : std::uint8_t { f32 = 4, f64 = 8 };

const char* msg_type_name(MsgType t) noexcept;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Message {
  MsgType type = MsgType::ctrl;
  nas::Phase phase = nas::Phase::w_update;
  Dtype dtype = Dtype::f32;
  std::uint32_t round = 0;
  std::uint16_t sender = 0;
  Tensor payload;

  friend bool operator==(const Message& a, const Message& b) {
    return a.type == b.type && a.phase == b.phase && a.dtype == b.dtype && a.round == b.round &&
           a.sender == b.sender && a.payload == b.payload;
  }
};

std::size_t encoded_size(const Message& m);
Bytes encode(const Message& m);
Message decode(std::span<const std::uint8_t> bytes);

/// Values as they arrive after a trip through `dtype`.
Tensor round_trip(const Tensor& t, Dtype dtype);

struct TranscriptEntry {
  std::uint32_t round = 0;
  std::uint16_t sender = 0;
  MsgType type = MsgType::ctrl;
  nas::Phase phase = nas::Phase::w_update;
  std::size_t bytes = 0;
  double l2norm = 0.0;

  nlohmann::json to_json() const;
};

class Transcript {
 public:
  void record(const Message& m, std::size_t bytes);
  const std::vector<TranscriptEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  /// One JSON object per line.
  std::string to_jsonl() const;
  /// FNV-1a over to_jsonl().
  std::uint64_t hash() const;

 private:
  std::vector<TranscriptEntry> entries_;
};

}  // namespace ssvfnas::wire

#endif  // SSVFNAS_WIRE_HPP

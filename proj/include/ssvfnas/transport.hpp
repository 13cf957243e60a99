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

#ifndef SSVFNAS_TRANSPORT_HPP
#define SSVFNAS_TRANSPORT_HPP

// Moves encoded frames between parties. The orchestrator drives every party from one thread;
// a transport only has to deliver frames per (sender, receiver) link in order.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ssvfnas/wire.hpp"

namespace ssvfnas::transport {

enum class Mode { in_process, socket };

const char* mode_name(Mode m) noexcept;
Mode parse_mode(const std::string& name);

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::uint16_t from, std::uint16_t to, const wire::Bytes& frame) = 0;
  /// Blocks until the next frame on the link from -> at is available.
  virtual wire::Bytes receive(std::uint16_t at, std::uint16_t from) = 0;
  virtual Mode mode() const noexcept = 0;
};

class InProcessTransport final : public Transport {
 public:
  void send(std::uint16_t from, std::uint16_t to, const wire::Bytes& frame) override;
  wire::Bytes receive(std::uint16_t at, std::uint16_t from) override;
  Mode mode() const noexcept override { return Mode::in_process; }

 private:
  std::map<std::pair<std::uint16_t, std::uint16_t>, std::deque<wire::Bytes>> links_;
};

/// Listening endpoint of the label party. Accepted connections must open with a CTRL hello
/// naming an expected sender.
class SocketListener {
 public:
  SocketListener();
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Accepts one connection and returns (party id, fd). Unknown or repeated ids are closed
  /// and reported as TransportError.
  std::pair<std::uint16_t, int> accept_party(const std::set<std::uint16_t>& expected);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connects to the listener on localhost and sends the hello for `party`.
int connect_party(std::uint16_t port, std::uint16_t party);

void write_frame(int fd, std::span<const std::uint8_t> frame);
/// Returns false on orderly shutdown before a frame started.
bool read_frame(int fd, wire::Bytes& out);

/// One TCP connection per passive party, all to the label party, over localhost.
class SocketTransport final : public Transport {
 public:
  SocketTransport(std::uint16_t label_party, const std::vector<std::uint16_t>& passive);
  ~SocketTransport() override;

  void send(std::uint16_t from, std::uint16_t to, const wire::Bytes& frame) override;
  wire::Bytes receive(std::uint16_t at, std::uint16_t from) override;
  Mode mode() const noexcept override { return Mode::socket; }

 private:
  // Frames arriving on one fd, filled by a reader thread.
  struct Inbox {
    int fd = -1;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<wire::Bytes> frames;
    bool closed = false;
    std::string error;
    std::thread reader;
  };

  Inbox& inbox_for(std::uint16_t at, std::uint16_t from);
  void start(Inbox& box);

  std::uint16_t label_party_;
  std::map<std::uint16_t, std::unique_ptr<Inbox>> at_label_;    // keyed by passive sender
  std::map<std::uint16_t, std::unique_ptr<Inbox>> at_passive_;  // keyed by passive receiver
};

std::unique_ptr<Transport> make_transport(Mode mode, std::uint16_t label_party,
                                          const std::vector<std::uint16_t>& passive);

}  // namespace ssvfnas::transport

#endif  // SSVFNAS_TRANSPORT_HPP

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

#include "ssvfnas/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace ssvfnas::transport {

const char* mode_name(Mode m) noexcept {
  return m == Mode::in_process ? "in_process" : "socket";
}

Mode parse_mode(const std::string& name) {
  if (name == "in_process") return Mode::in_process;
  if (name == "socket") return Mode::socket;
  throw std::invalid_argument("unknown transport mode '" + name + "'");
}

void InProcessTransport::send(std::uint16_t from, std::uint16_t to, const wire::Bytes& frame) {
  links_[{from, to}].push_back(frame);
}

wire::Bytes InProcessTransport::receive(std::uint16_t at, std::uint16_t from) {
  auto it = links_.find({from, at});
  if (it == links_.end() || it->second.empty()) {
    throw TransportError("no pending frame from party " + std::to_string(from) + " to party " +
                         std::to_string(at));
  }
  wire::Bytes out = std::move(it->second.front());
  it->second.pop_front();
  return out;
}

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

bool read_exact(int fd, std::uint8_t* dst, std::size_t n, bool allow_eof_at_start) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r == 0) {
      if (got == 0 && allow_eof_at_start) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

void write_frame(int fd, std::span<const std::uint8_t> frame) {
  const std::uint32_t len = static_cast<std::uint32_t>(frame.size());
  std::uint8_t prefix[4];
  std::memcpy(prefix, &len, 4);
  auto write_all = [fd](const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        sys_fail("send");
      }
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  };
  write_all(prefix, 4);
  write_all(frame.data(), frame.size());
}

bool read_frame(int fd, wire::Bytes& out) {
  std::uint8_t prefix[4];
  if (!read_exact(fd, prefix, 4, true)) return false;
  std::uint32_t len = 0;
  std::memcpy(&len, prefix, 4);
  out.resize(len);
  read_exact(fd, out.data(), len, false);
  return true;
}

SocketListener::SocketListener() {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) sys_fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd_);
    sys_fail("bind");
  }
  if (::listen(fd_, 64) < 0) {
    ::close(fd_);
    sys_fail("listen");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::pair<std::uint16_t, int> SocketListener::accept_party(
    const std::set<std::uint16_t>& expected) {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) sys_fail("accept");
  wire::Bytes hello;
  try {
    if (!read_frame(fd, hello)) throw TransportError("peer closed before hello");
    const wire::Message m = wire::decode(hello);
    if (m.type != wire::MsgType::ctrl) throw TransportError("first frame is not a CTRL hello");
    if (!expected.count(m.sender)) {
      throw TransportError("connection from unknown party id " + std::to_string(m.sender));
    }
    return {m.sender, fd};
  } catch (const wire::DecodeError& e) {
    ::close(fd);
    throw TransportError(std::string("malformed hello: ") + e.what());
  } catch (...) {
    ::close(fd);
    throw;
  }
}

int connect_party(std::uint16_t port, std::uint16_t party) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    sys_fail("connect");
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  wire::Message hello;
  hello.type = wire::MsgType::ctrl;
  hello.sender = party;
  hello.payload = Tensor::scalar(0.0);
  write_frame(fd, wire::encode(hello));
  return fd;
}

SocketTransport::SocketTransport(std::uint16_t label_party,
                                 const std::vector<std::uint16_t>& passive)
    : label_party_(label_party) {
  std::set<std::uint16_t> expected(passive.begin(), passive.end());
  if (expected.size() != passive.size() || expected.count(label_party)) {
    throw std::invalid_argument("party ids must be unique");
  }
  SocketListener listener;
  try {
    for (std::uint16_t id : passive) {
      auto client = std::make_unique<Inbox>();
      client->fd = connect_party(listener.port(), id);
      at_passive_.emplace(id, std::move(client));
      auto [who, fd] = listener.accept_party(expected);
      expected.erase(who);
      auto server = std::make_unique<Inbox>();
      server->fd = fd;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      at_label_.emplace(who, std::move(server));
    }
  } catch (...) {
    for (auto& [id, box] : at_passive_) ::close(box->fd);
    for (auto& [id, box] : at_label_) ::close(box->fd);
    throw;
  }
  for (auto& [id, box] : at_passive_) start(*box);
  for (auto& [id, box] : at_label_) start(*box);
}

SocketTransport::~SocketTransport() {
  for (auto* boxes : {&at_passive_, &at_label_}) {
    for (auto& [id, box] : *boxes) ::shutdown(box->fd, SHUT_RDWR);
  }
  for (auto* boxes : {&at_passive_, &at_label_}) {
    for (auto& [id, box] : *boxes) {
      if (box->reader.joinable()) box->reader.join();
      ::close(box->fd);
    }
  }
}

void SocketTransport::start(Inbox& box) {
  box.reader = std::thread([&box] {
    wire::Bytes frame;
    std::string error;
    try {
      while (read_frame(box.fd, frame)) {
        std::lock_guard lock(box.mu);
        box.frames.push_back(std::move(frame));
        box.cv.notify_all();
        frame = {};
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(box.mu);
    box.closed = true;
    box.error = error;
    box.cv.notify_all();
  });
}

SocketTransport::Inbox& SocketTransport::inbox_for(std::uint16_t at, std::uint16_t from) {
  if (at == label_party_) {
    auto it = at_label_.find(from);
    if (it != at_label_.end()) return *it->second;
  } else if (from == label_party_) {
    auto it = at_passive_.find(at);
    if (it != at_passive_.end()) return *it->second;
  }
  throw TransportError("no link from party " + std::to_string(from) + " to party " +
                       std::to_string(at));
}

void SocketTransport::send(std::uint16_t from, std::uint16_t to, const wire::Bytes& frame) {
  // The fd that delivers into to's inbox for this link is the opposite end of the connection.
  const int fd = from == label_party_ ? inbox_for(label_party_, to).fd
                                      : inbox_for(from, label_party_).fd;
  if (from != label_party_ && to != label_party_) {
    throw TransportError("passive parties only talk to the label party");
  }
  write_frame(fd, frame);
}

wire::Bytes SocketTransport::receive(std::uint16_t at, std::uint16_t from) {
  Inbox& box = inbox_for(at, from);
  std::unique_lock lock(box.mu);
  box.cv.wait(lock, [&] { return !box.frames.empty() || box.closed; });
  if (box.frames.empty()) {
    throw TransportError("link " + std::to_string(from) + "->" + std::to_string(at) +
                         " closed" + (box.error.empty() ? "" : ": " + box.error));
  }
  wire::Bytes out = std::move(box.frames.front());
  box.frames.pop_front();
  return out;
}

std::unique_ptr<Transport> make_transport(Mode mode, std::uint16_t label_party,
                                          const std::vector<std::uint16_t>& passive) {
  if (mode == Mode::socket) return std::make_unique<SocketTransport>(label_party, passive);
  return std::make_unique<InProcessTransport>();
}

}  // namespace ssvfnas::transport

// Copyright 2026 The flk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flk/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <thread>

#include "flk/log.hpp"
#include "flk/message.hpp"

namespace flk {
namespace {

// recv granularity; bounds how long a blocked reader takes to notice
// stopping_. Signed off against nothing but patience.
constexpr int kRecvTimeoutMs = 500;
constexpr int kLongPollTickMs = 250;

void set_recv_timeout(int fd, int ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

bool send_all(int fd, const uint8_t* data, size_t len) {
  size_t sent = 0;
  while (sent < len) {
    const ssize_t n =
        ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(n);
  }
  return true;
}

// Returns false on EOF or error. `abort` lets the server bail out of a
// half-read frame during shutdown instead of spinning on timeouts.
bool read_exact(int fd, uint8_t* out, size_t len,
                const std::atomic<bool>* abort) {
  size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, out + got, len - got, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        if (abort != nullptr && abort->load()) return false;
        continue;
      }
      return false;
    }
    got += static_cast<size_t>(n);
  }
  return true;
}

// Reads one full frame. Returns false on clean EOF before the first header
// byte; throws DecodeError when the header itself is bad.
bool read_frame(int fd, std::vector<uint8_t>& frame,
                const std::atomic<bool>* abort) {
  uint8_t header[kFrameHeaderSize];
  if (!read_exact(fd, header, sizeof(header), abort)) return false;
  const FrameHeader fh = decode_frame_header(header, sizeof(header));
  frame.resize(kFrameHeaderSize + fh.payload_len);
  std::memcpy(frame.data(), header, sizeof(header));
  if (fh.payload_len > 0 &&
      !read_exact(fd, frame.data() + kFrameHeaderSize, fh.payload_len,
                  abort)) {
    throw DecodeError(DecodeErrorCode::kTruncated,
                      "connection dropped mid-frame");
  }
  return true;
}

bool send_message(int fd, const Message& msg) {
  const std::vector<uint8_t> frame = encode_message(msg);
  return send_all(fd, frame.data(), frame.size());
}

}  // namespace

WireServer::WireServer(std::string host, uint16_t port,
                       InprocChannel* channel)
    : host_(std::move(host)), port_(port), channel_(channel) {}

WireServer::~WireServer() { stop(); }

void WireServer::start() {
  ::signal(SIGPIPE, SIG_IGN);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host_.c_str(), nullptr, &hints, &res) != 0 ||
        res == nullptr) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw TransportError("cannot resolve host " + host_);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) <
          0 ||
      ::listen(listen_fd_, 64) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("cannot bind " + host_ + ":" +
                         std::to_string(port_));
  }
  if (port_ == 0) {
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }
  set_recv_timeout(listen_fd_, kRecvTimeoutMs);
  FLK_LOG_INFO("listening on " << host_ << ":" << port_);
  acceptor_ = std::thread([this] { accept_loop(); });
}

void WireServer::stop() {
  if (listen_fd_ < 0 && !acceptor_.joinable()) return;
  stopping_.store(true);
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard<std::mutex> lock(conn_mu_);
    conns.swap(connections_);
  }
  for (auto& t : conns) {
    if (t.joinable()) t.join();
  }
}

void WireServer::accept_loop() {
  while (!stopping_.load()) {
    sockaddr_in peer{};
    socklen_t len = sizeof(peer);
    const int fd =
        ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
    if (fd < 0) {
      if (stopping_.load()) break;
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      break;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    set_recv_timeout(fd, kRecvTimeoutMs);
    std::lock_guard<std::mutex> lock(conn_mu_);
    connections_.emplace_back([this, fd] {
      active_.fetch_add(1);
      serve_connection(fd);
      ::close(fd);
      active_.fetch_sub(1);
    });
  }
}

void WireServer::serve_connection(int fd) {
  bool authed = false;
  std::vector<uint8_t> frame;
  while (!stopping_.load()) {
    Message request;
    try {
      if (!read_frame(fd, frame, &stopping_)) return;
      request = decode_message(frame);
    } catch (const DecodeError& e) {
      send_message(fd, ErrorMsg{kErrProtocol, e.what()});
      return;
    }

    Message reply;
    switch (message_type(request)) {
      case MsgType::kRegister:
        reply = channel_->register_rpc(std::get<RegisterMsg>(request));
        authed = std::holds_alternative<RegisterAckMsg>(reply);
        break;
      case MsgType::kGetModel: {
        if (!authed) {
          reply = ErrorMsg{kErrAuth, "register first"};
          break;
        }
        const auto& get = std::get<GetModelMsg>(request);
        // Long poll: re-check until the round opens or we shut down.
        for (;;) {
          auto held = channel_->poll_once(get);
          if (held.has_value()) {
            reply = std::move(*held);
            break;
          }
          if (stopping_.load()) {
            reply = ErrorMsg{kErrInternal, "server shutting down"};
            break;
          }
          std::this_thread::sleep_for(
              std::chrono::milliseconds(kLongPollTickMs));
        }
        break;
      }
      case MsgType::kUpdate:
        if (!authed) {
          reply = ErrorMsg{kErrAuth, "register first"};
        } else {
          reply = channel_->update_rpc(std::get<UpdateMsg>(request));
        }
        break;
      default:
        reply = ErrorMsg{kErrProtocol, "unexpected message type"};
        break;
    }

    const bool drop = std::holds_alternative<ErrorMsg>(reply) &&
                      std::get<ErrorMsg>(reply).code == kErrAuth;
    if (!send_message(fd, reply)) return;
    if (drop) return;
  }
}

WireProxy::WireProxy(std::string host, uint16_t port)
    : host_(std::move(host)), port_(port) {
  ::signal(SIGPIPE, SIG_IGN);
}

WireProxy::~WireProxy() { close_socket(); }

void WireProxy::close_socket() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  session_authed_ = false;
}

void WireProxy::connect_once() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host_.c_str(), nullptr, &hints, &res) != 0 ||
        res == nullptr) {
      ::close(fd);
      throw TransportError("cannot resolve host " + host_);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(fd);
    throw TransportError("cannot connect to " + host_ + ":" +
                         std::to_string(port_));
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  fd_ = fd;
  session_authed_ = false;
}

Message WireProxy::register_client(const std::string& token,
                                   const std::string& name) {
  token_ = token;
  name_ = name;
  have_credentials_ = true;
  return rpc(RegisterMsg{token, name}, /*is_register=*/true);
}

Message WireProxy::fetch_model(uint32_t client_id) {
  return rpc(GetModelMsg{client_id}, /*is_register=*/false);
}

Message WireProxy::submit_update(const UpdateMsg& update) {
  return rpc(update, /*is_register=*/false);
}

Message WireProxy::rpc(const Message& request, bool is_register) {
  constexpr int kAttempts = 5;
  constexpr auto kBackoffBase = std::chrono::milliseconds(200);
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(kBackoffBase * (1 << (attempt - 1)));
    }
    try {
      if (fd_ < 0) connect_once();
      // A reconnected session must re-authenticate before anything else;
      // registration is idempotent so replaying it is safe.
      if (!is_register && !session_authed_) {
        if (!have_credentials_) {
          throw TransportError("not registered");
        }
        if (!send_message(fd_, Message{RegisterMsg{token_, name_}})) {
          throw TransportError("send failed");
        }
        std::vector<uint8_t> frame;
        if (!read_frame(fd_, frame, nullptr)) {
          throw TransportError("connection closed during re-register");
        }
        Message ack = decode_message(frame);
        if (auto* err = std::get_if<ErrorMsg>(&ack)) {
          throw RemoteError(err->code, err->text);
        }
        session_authed_ = true;
      }
      if (!send_message(fd_, request)) {
        throw TransportError("send failed");
      }
      std::vector<uint8_t> frame;
      if (!read_frame(fd_, frame, nullptr)) {
        throw TransportError("connection closed mid-call");
      }
      Message reply = decode_message(frame);
      if (is_register && std::holds_alternative<RegisterAckMsg>(reply)) {
        session_authed_ = true;
      }
      return reply;
    } catch (const TransportError& e) {
      last_error = e.what();
      FLK_LOG_DEBUG("rpc attempt " << attempt + 1 << " failed: "
                                   << last_error);
      close_socket();
    } catch (const DecodeError& e) {
      close_socket();
      // kTruncated here means the peer died mid-frame: transient. Anything
      // else is a malformed frame and retrying cannot fix it.
      if (e.code() != DecodeErrorCode::kTruncated) throw;
      last_error = e.what();
    }
  }
  throw TransportError("rpc failed after " + std::to_string(kAttempts) +
                       " attempts: " + last_error);
}

}  // namespace flk

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

#ifndef FLK_WIRE_HPP_
#define FLK_WIRE_HPP_

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "flk/channel.hpp"

namespace flk {

// Framed-TCP endpoint in front of a serialized ServerApi. One thread per
// connection; a connection must REGISTER before anything else is accepted.
// The endpoint holds no federation logic: requests go through the channel,
// replies come back from it.
class WireServer {
 public:
  // port 0 binds an ephemeral port; read it back with port().
  WireServer(std::string host, uint16_t port, InprocChannel* channel);
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  void start();  // throws TransportError when the address cannot be bound
  void stop();

  uint16_t port() const { return port_; }
  int active_connections() const { return active_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::string host_;
  uint16_t port_;
  InprocChannel* channel_;

  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<int> active_{0};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> connections_;
};

// Blocking request/response proxy used by a deployed client. Transient
// connection failures are retried with exponential backoff (200 ms base,
// factor 2, 5 attempts per call); a fresh connection re-registers
// transparently, which is idempotent on the server.
class WireProxy final : public ClientTransport {
 public:
  WireProxy(std::string host, uint16_t port);
  ~WireProxy() override;

  Message register_client(const std::string& token,
                          const std::string& name) override;
  Message fetch_model(uint32_t client_id) override;
  Message submit_update(const UpdateMsg& update) override;

 private:
  Message rpc(const Message& request, bool is_register);
  void connect_once();  // throws TransportError on failure
  void close_socket();

  std::string host_;
  uint16_t port_;
  int fd_ = -1;
  bool session_authed_ = false;
  std::string token_;
  std::string name_;
  bool have_credentials_ = false;
};

}  // namespace flk

#endif  // FLK_WIRE_HPP_

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

#include <arpa/inet.h>
#include <doctest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <memory>
#include <set>
#include <thread>
#include <vector>

#include "flk/client.hpp"
#include "flk/orchestrator.hpp"
#include "flk/server_agent.hpp"
#include "flk/wire.hpp"

using namespace flk;

namespace {

ExperimentConfig wire_cfg(uint32_t clients, uint32_t rounds) {
  ExperimentConfig c;
  c.seed = 7;
  c.rounds = rounds;
  c.clients = clients;
  c.local_epochs = 1;
  c.batch_size = 16;
  c.learning_rate = 0.1;
  c.task.kind = TaskKind::kLogreg;
  c.task.n_per_class = 25;
  c.task.n_classes = 2;
  c.task.feature_dim = 5;
  c.task.class_sep = 3.0;
  c.partition.scheme = PartitionScheme::kIid;
  c.comm.auth_token = "wire-test-token";
  return c;
}

// A real TCP server around a real agent, everything in this process.
struct LiveServer {
  ExperimentConfig cfg;
  WallClock clock;
  ServerAgent agent;
  HookRegistry client_half;  // built-ins' client side, unused server-side
  InprocChannel channel;
  WireServer server;
  std::thread pump;
  std::atomic<bool> stop_pump{false};

  explicit LiveServer(const ExperimentConfig& c, uint16_t port = 0)
      : cfg(c),
        agent(cfg, &clock),
        channel(&agent, false),
        server(cfg.comm.host, port, &channel) {
    register_builtin_hooks(cfg, agent.hooks(), client_half);
    server.start();
    pump = std::thread([this] {
      while (!stop_pump.load()) {
        channel.tick();
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
    });
  }
  ~LiveServer() {
    stop_pump.store(true);
    pump.join();
    server.stop();
  }

  uint16_t port() const { return server.port(); }
  bool finished() {
    return channel.with_lock([&] { return agent.finished(); });
  }
  ParameterVector model() {
    return channel.with_lock([&] { return agent.global_model(); });
  }
};

// Runs one federated client to completion; rethrowable exception captured.
void run_one_client(const ExperimentConfig& cfg, uint32_t index, uint16_t port,
                    const HookRegistry* hooks, std::exception_ptr& error) {
  try {
    WireProxy proxy(cfg.comm.host, port);
    ClientAgent c(cfg, "client-" + std::to_string(index), hooks);
    c.run(proxy);
  } catch (...) {
    error = std::current_exception();
  }
}

int connect_loopback(uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) ==
          0);
  return fd;
}

void send_raw(int fd, const std::vector<uint8_t>& bytes) {
  size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, 0);
    REQUIRE(n > 0);
    off += size_t(n);
  }
}

// Reads one reply frame (header + payload); empty on EOF.
std::vector<uint8_t> read_raw_frame(int fd) {
  std::vector<uint8_t> buf(kFrameHeaderSize);
  size_t got = 0;
  while (got < buf.size()) {
    const ssize_t n = ::recv(fd, buf.data() + got, buf.size() - got, 0);
    if (n <= 0) return {};
    got += size_t(n);
  }
  const FrameHeader h = decode_frame_header(buf.data(), buf.size());
  buf.resize(kFrameHeaderSize + h.payload_len);
  while (got < buf.size()) {
    const ssize_t n = ::recv(fd, buf.data() + got, buf.size() - got, 0);
    if (n <= 0) return {};
    got += size_t(n);
  }
  return buf;
}

}  // namespace

TEST_SUITE_BEGIN("wire");

TEST_CASE("loopback deployment reproduces the simulation bitwise") {
  const ExperimentConfig cfg = wire_cfg(3, 2);
  const RunResult sim = run_simulation(cfg);

  LiveServer live(cfg);
  HookRegistry server_half, client_hooks;
  register_builtin_hooks(cfg, server_half, client_hooks);

  std::vector<std::exception_ptr> errors(cfg.clients);
  std::vector<std::thread> clients;
  for (uint32_t k = 0; k < cfg.clients; ++k) {
    clients.emplace_back(run_one_client, cfg, k, live.port(), &client_hooks,
                         std::ref(errors[k]));
  }
  for (auto& t : clients) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  CHECK(live.finished());
  CHECK(live.model().values == sim.model.values);
}

TEST_CASE("a wrong token is rejected and the session stays unusable") {
  const ExperimentConfig cfg = wire_cfg(1, 1);
  LiveServer live(cfg);

  WireProxy proxy(cfg.comm.host, live.port());
  const Message refused = proxy.register_client("not-the-token", "client-0");
  REQUIRE(std::holds_alternative<ErrorMsg>(refused));
  CHECK(std::get<ErrorMsg>(refused).code == kErrAuth);

  // The server cut the connection; the proxy reconnects and replays its
  // (bad) registration, which can only fail again.
  CHECK_THROWS_AS((void)proxy.fetch_model(0), RemoteError);

  // Same proxy recovers once given the real token.
  const Message ok =
      proxy.register_client(cfg.comm.auth_token, "client-0");
  REQUIRE(std::holds_alternative<RegisterAckMsg>(ok));
  CHECK(std::get<RegisterAckMsg>(ok).client_id == 0);
}

TEST_CASE("a client started before the server retries and completes") {
  ExperimentConfig cfg = wire_cfg(1, 1);
  // Nothing is listening here yet; the proxy's backoff must carry the
  // client across the gap.
  const uint16_t port =
      uint16_t(21000 + (::getpid() % 2000));
  HookRegistry server_half, client_hooks;
  register_builtin_hooks(cfg, server_half, client_hooks);

  std::exception_ptr error;
  std::thread client(run_one_client, cfg, 0u, port, &client_hooks,
                     std::ref(error));
  std::this_thread::sleep_for(std::chrono::milliseconds(500));

  LiveServer live(cfg, port);
  client.join();
  if (error) std::rethrow_exception(error);
  CHECK(live.finished());
  CHECK(live.model().values == run_simulation(cfg).model.values);
}

TEST_CASE("concurrent registrations get distinct ids") {
  const ExperimentConfig cfg = wire_cfg(8, 1);
  LiveServer live(cfg);

  std::vector<uint32_t> ids(8, 0);
  std::vector<std::thread> threads;
  for (uint32_t k = 0; k < 8; ++k) {
    threads.emplace_back([&, k] {
      WireProxy proxy(cfg.comm.host, live.port());
      const Message ack = proxy.register_client(cfg.comm.auth_token,
                                                "client-" + std::to_string(k));
      ids[k] = std::get<RegisterAckMsg>(ack).client_id;
    });
  }
  for (auto& t : threads) t.join();
  const std::set<uint32_t> unique(ids.begin(), ids.end());
  CHECK(unique.size() == 8);
  CHECK(*unique.begin() == 0);
  CHECK(*unique.rbegin() == 7);
}

TEST_CASE("raw malformed frames get a typed protocol error, not a crash") {
  const ExperimentConfig cfg = wire_cfg(2, 1);
  LiveServer live(cfg);

  SUBCASE("bad magic") {
    const int fd = connect_loopback(live.port());
    send_raw(fd, std::vector<uint8_t>{'X', 'Y', 1, 3, 0, 0, 0, 0, 0, 0, 0, 0});
    const auto reply = read_raw_frame(fd);
    REQUIRE(!reply.empty());
    const Message msg = decode_message(reply);
    REQUIRE(std::holds_alternative<ErrorMsg>(msg));
    CHECK(std::get<ErrorMsg>(msg).code == kErrProtocol);
    ::close(fd);
  }

  SUBCASE("oversized payload length") {
    const int fd = connect_loopback(live.port());
    std::vector<uint8_t> frame{kWireMagic0, kWireMagic1, kWireVersion, 3};
    const uint64_t huge = kMaxPayloadBytes + 1;
    for (int i = 0; i < 8; ++i) frame.push_back(uint8_t(huge >> (8 * i)));
    send_raw(fd, frame);
    const auto reply = read_raw_frame(fd);
    REQUIRE(!reply.empty());
    const Message msg = decode_message(reply);
    REQUIRE(std::holds_alternative<ErrorMsg>(msg));
    CHECK(std::get<ErrorMsg>(msg).code == kErrProtocol);
    ::close(fd);
  }

  SUBCASE("fetch before register is an auth error") {
    const int fd = connect_loopback(live.port());
    send_raw(fd, encode_message(GetModelMsg{0}));
    const auto reply = read_raw_frame(fd);
    REQUIRE(!reply.empty());
    const Message msg = decode_message(reply);
    REQUIRE(std::holds_alternative<ErrorMsg>(msg));
    CHECK(std::get<ErrorMsg>(msg).code == kErrAuth);
    // And the server hangs up on auth failures.
    CHECK(read_raw_frame(fd).empty());
    ::close(fd);
  }
}

TEST_CASE("a config digest mismatch aborts the client before training") {
  const ExperimentConfig cfg = wire_cfg(1, 1);
  LiveServer live(cfg);

  ExperimentConfig other = cfg;
  other.seed = cfg.seed + 1;  // different experiment, same transport
  HookRegistry server_half, client_hooks;
  register_builtin_hooks(other, server_half, client_hooks);

  std::exception_ptr error;
  std::thread client(run_one_client, other, 0u, live.port(), &client_hooks,
                     std::ref(error));
  client.join();
  REQUIRE(error != nullptr);
  CHECK_THROWS_AS(std::rethrow_exception(error), ConfigMismatchError);
}

TEST_SUITE_END();

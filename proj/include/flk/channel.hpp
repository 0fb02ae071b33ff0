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

#ifndef FLK_CHANNEL_HPP_
#define FLK_CHANNEL_HPP_

#include <condition_variable>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "flk/message.hpp"

namespace flk {

// Connection-level failure after retries were exhausted.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The server rejected a request with an ERROR message.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(uint16_t code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  uint16_t code() const { return code_; }

 private:
  uint16_t code_;
};

// REGISTER_ACK carried a config digest that disagrees with ours.
struct ConfigMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// What a transport needs from the server side. The implementation behind
// this interface is single-writer; callers serialize through a channel.
class ServerApi {
 public:
  virtual ~ServerApi() = default;

  virtual Message handle_register(const RegisterMsg& msg) = 0;
  // nullopt means "nothing to serve yet, ask again" (the long-poll hold).
  virtual std::optional<Message> poll_model(const GetModelMsg& msg) = 0;
  virtual Message handle_update(const UpdateMsg& msg) = 0;
  // Advances time-based transitions (wall-clock round timeouts). Returns
  // true when server state changed.
  virtual bool tick() = 0;
};

// What a client agent needs from the transport. Every call is a blocking
// request/response; responses may be ERROR messages, which the caller maps.
class ClientTransport {
 public:
  virtual ~ClientTransport() = default;

  virtual Message register_client(const std::string& token,
                                  const std::string& name) = 0;
  // Blocks until MODEL, DONE or ERROR.
  virtual Message fetch_model(uint32_t client_id) = 0;
  virtual Message submit_update(const UpdateMsg& update) = 0;
};

// Serialization monitor in front of a ServerApi: one mutex makes the api
// single-writer, one condition variable wakes parked fetches whenever state
// may have changed. With serialize_frames set, every request and response
// takes a full encode/decode round trip, so in-process runs exercise the
// same codec path as the wire (parity audit mode).
class InprocChannel {
 public:
  InprocChannel(ServerApi* api, bool serialize_frames)
      : api_(api), serialize_(serialize_frames) {}

  Message register_rpc(const RegisterMsg& msg);
  // Blocks until poll_model yields; wakes on channel notifications.
  Message fetch_rpc(const GetModelMsg& msg);
  // Non-blocking single probe, for callers that do their own pacing.
  std::optional<Message> poll_once(const GetModelMsg& msg);
  Message update_rpc(const UpdateMsg& msg);

  bool tick();

  // Runs f with the api lock held (metrics draining, state inspection).
  template <typename F>
  auto with_lock(F&& f) {
    std::lock_guard<std::mutex> lock(mu_);
    return f();
  }

  void notify_all() { cv_.notify_all(); }

 private:
  Message through_codec(const Message& msg) const;

  ServerApi* api_;
  bool serialize_;
  std::mutex mu_;
  std::condition_variable cv_;
};

// ClientTransport over an InprocChannel; one instance per virtual client.
class InprocTransport final : public ClientTransport {
 public:
  explicit InprocTransport(InprocChannel* channel) : channel_(channel) {}

  Message register_client(const std::string& token,
                          const std::string& name) override {
    return channel_->register_rpc(RegisterMsg{token, name});
  }
  Message fetch_model(uint32_t client_id) override {
    return channel_->fetch_rpc(GetModelMsg{client_id});
  }
  Message submit_update(const UpdateMsg& update) override {
    return channel_->update_rpc(update);
  }

 private:
  InprocChannel* channel_;
};

}  // namespace flk

#endif  // FLK_CHANNEL_HPP_

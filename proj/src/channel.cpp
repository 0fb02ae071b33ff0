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

#include "flk/channel.hpp"

#include <chrono>
#include <utility>

namespace flk {

Message InprocChannel::through_codec(const Message& msg) const {
  return decode_message(encode_message(msg));
}

Message InprocChannel::register_rpc(const RegisterMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  Message reply =
      serialize_
          ? api_->handle_register(
                std::get<RegisterMsg>(through_codec(Message{msg})))
          : api_->handle_register(msg);
  if (serialize_) reply = through_codec(reply);
  cv_.notify_all();
  return reply;
}

Message InprocChannel::fetch_rpc(const GetModelMsg& msg) {
  std::unique_lock<std::mutex> lock(mu_);
  const GetModelMsg request =
      serialize_ ? std::get<GetModelMsg>(through_codec(Message{msg})) : msg;
  for (;;) {
    std::optional<Message> reply = api_->poll_model(request);
    if (reply.has_value()) {
      return serialize_ ? through_codec(*reply) : std::move(*reply);
    }
    // Timed wait as a safety net against missed notifications.
    cv_.wait_for(lock, std::chrono::milliseconds(20));
  }
}

std::optional<Message> InprocChannel::poll_once(const GetModelMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  std::optional<Message> reply = api_->poll_model(
      serialize_ ? std::get<GetModelMsg>(through_codec(Message{msg})) : msg);
  if (reply.has_value() && serialize_) reply = through_codec(*reply);
  return reply;
}

Message InprocChannel::update_rpc(const UpdateMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  Message reply =
      serialize_
          ? api_->handle_update(
                std::get<UpdateMsg>(through_codec(Message{msg})))
          : api_->handle_update(msg);
  if (serialize_) reply = through_codec(reply);
  cv_.notify_all();
  return reply;
}

bool InprocChannel::tick() {
  std::lock_guard<std::mutex> lock(mu_);
  const bool changed = api_->tick();
  if (changed) cv_.notify_all();
  return changed;
}

}  // namespace flk

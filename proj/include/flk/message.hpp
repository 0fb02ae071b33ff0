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

#ifndef FLK_MESSAGE_HPP_
#define FLK_MESSAGE_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flk/hooks.hpp"
#include "flk/sha256.hpp"

namespace flk {

// Frame layout: magic "FL" (0x46 0x4C), version u8 = 1, msg_type u8,
// payload_len u64 LE, payload. All integers little-endian; floats IEEE-754
// binary64 little-endian. Strings are u32-length-prefixed UTF-8.
inline constexpr uint8_t kWireMagic0 = 0x46;
inline constexpr uint8_t kWireMagic1 = 0x4C;
inline constexpr uint8_t kWireVersion = 1;
inline constexpr size_t kFrameHeaderSize = 12;
// Socket-safety bound on allocations; far above any real model size.
inline constexpr uint64_t kMaxPayloadBytes = uint64_t(1) << 30;

enum class MsgType : uint8_t {
  kError = 0,
  kRegister = 1,
  kRegisterAck = 2,
  kGetModel = 3,
  kModel = 4,
  kUpdate = 5,
  kAck = 6,
  kDone = 7,
};

// Application-level error codes carried by ErrorMsg.
inline constexpr uint16_t kErrAuth = 1;
inline constexpr uint16_t kErrProtocol = 2;
inline constexpr uint16_t kErrSecaggDropout = 3;
inline constexpr uint16_t kErrInternal = 4;

struct ErrorMsg {
  uint16_t code = 0;
  std::string text;
};
struct RegisterMsg {
  std::string token;
  std::string name;
};
struct RegisterAckMsg {
  uint32_t client_id = 0;
  Sha256Digest config_digest{};
};
struct GetModelMsg {
  uint32_t client_id = 0;
};
struct ModelMsg {
  uint32_t round = 0;
  std::vector<double> params;
  std::string metadata_json;  // hook metadata, e.g. {"round_eta": 110.0}
};
struct UpdateMsg {
  uint32_t client_id = 0;
  uint32_t round = 0;
  uint64_t sample_count = 0;
  uint8_t flag = 0;  // 0: plain f64 params; 1: masked u64 residues
  std::vector<double> plain;
  std::vector<uint64_t> masked;
  std::string metrics_json;  // staged client metrics, JSON array
};
struct AckMsg {};
struct DoneMsg {
  uint32_t final_round = 0;
};

// Alternative order IS the wire msg_type numbering.
using Message = std::variant<ErrorMsg, RegisterMsg, RegisterAckMsg,
                             GetModelMsg, ModelMsg, UpdateMsg, AckMsg,
                             DoneMsg>;
static_assert(std::variant_size_v<Message> == 8);

MsgType message_type(const Message& msg);

enum class DecodeErrorCode {
  kBadMagic,
  kUnknownVersion,
  kUnknownType,
  kTruncated,
  kLengthMismatch,
  kBadJson,
  kTooLarge,
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  DecodeErrorCode code() const { return code_; }

 private:
  DecodeErrorCode code_;
};

struct FrameHeader {
  MsgType type;
  uint64_t payload_len;
};

// Validates magic, version, type, and the payload cap from the first
// kFrameHeaderSize bytes. The socket layer uses this before allocating.
FrameHeader decode_frame_header(const uint8_t* data, size_t len);

// Full frame in, full frame out. decode throws DecodeError; encode is total
// on well-formed in-memory messages.
std::vector<uint8_t> encode_message(const Message& msg);
Message decode_message(const uint8_t* data, size_t len);
Message decode_message(const std::vector<uint8_t>& frame);

// Hook metadata <-> the MODEL metadata JSON field.
std::string metadata_to_json(const MetadataMap& metadata);
MetadataMap metadata_from_json(const std::string& json_text);

// Staged client metrics <-> the UPDATE metrics JSON field.
std::string metric_entries_to_json(
    const std::vector<MetricsStore::Entry>& entries);
std::vector<MetricsStore::Entry> metric_entries_from_json(
    const std::string& json_text);

}  // namespace flk

#endif  // FLK_MESSAGE_HPP_

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

#include "flk/message.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <json.hpp>

namespace flk {

namespace {

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<uint32_t>::max()) {
      throw std::length_error("string too long for wire format");
    }
    u32(uint32_t(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }

  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= uint16_t(data_[pos_++]) << (8 * i);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(data_[pos_++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(uint8_t* out, size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  size_t remaining() const { return len_ - pos_; }

 private:
  void need(size_t n) {
    if (len_ - pos_ < n) {
      throw DecodeError(DecodeErrorCode::kTruncated, "truncated payload");
    }
  }
  const uint8_t* data_;
  size_t len_;
  size_t pos_ = 0;
};

std::string checked_json(ByteReader& r, const char* field) {
  std::string text = r.str();
  if (!nlohmann::json::accept(text)) {
    throw DecodeError(DecodeErrorCode::kBadJson,
                      std::string("malformed JSON in ") + field);
  }
  return text;
}

uint64_t checked_dim(ByteReader& r) {
  const uint64_t dim = r.u64();
  if (dim > kMaxPayloadBytes / 8) {
    throw DecodeError(DecodeErrorCode::kTooLarge,
                      "vector dimension exceeds payload cap");
  }
  return dim;
}

}  // namespace

MsgType message_type(const Message& msg) {
  return MsgType(uint8_t(msg.index()));
}

FrameHeader decode_frame_header(const uint8_t* data, size_t len) {
  if (len < kFrameHeaderSize) {
    throw DecodeError(DecodeErrorCode::kTruncated, "incomplete frame header");
  }
  if (data[0] != kWireMagic0 || data[1] != kWireMagic1) {
    throw DecodeError(DecodeErrorCode::kBadMagic, "bad frame magic");
  }
  if (data[2] != kWireVersion) {
    throw DecodeError(DecodeErrorCode::kUnknownVersion,
                      "unknown protocol version " + std::to_string(data[2]));
  }
  if (data[3] > uint8_t(MsgType::kDone)) {
    throw DecodeError(DecodeErrorCode::kUnknownType,
                      "unknown message type " + std::to_string(data[3]));
  }
  uint64_t payload_len = 0;
  for (int i = 0; i < 8; ++i) {
    payload_len |= uint64_t(data[4 + i]) << (8 * i);
  }
  if (payload_len > kMaxPayloadBytes) {
    throw DecodeError(DecodeErrorCode::kTooLarge,
                      "payload length exceeds cap");
  }
  return FrameHeader{MsgType(data[3]), payload_len};
}

std::vector<uint8_t> encode_message(const Message& msg) {
  ByteWriter payload;
  std::visit(
      [&payload](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ErrorMsg>) {
          payload.u16(m.code);
          payload.str(m.text);
        } else if constexpr (std::is_same_v<T, RegisterMsg>) {
          payload.str(m.token);
          payload.str(m.name);
        } else if constexpr (std::is_same_v<T, RegisterAckMsg>) {
          payload.u32(m.client_id);
          payload.bytes(m.config_digest.data(), m.config_digest.size());
        } else if constexpr (std::is_same_v<T, GetModelMsg>) {
          payload.u32(m.client_id);
        } else if constexpr (std::is_same_v<T, ModelMsg>) {
          payload.u32(m.round);
          payload.u64(m.params.size());
          for (double v : m.params) payload.f64(v);
          payload.str(m.metadata_json);
        } else if constexpr (std::is_same_v<T, UpdateMsg>) {
          payload.u32(m.client_id);
          payload.u32(m.round);
          payload.u64(m.sample_count);
          payload.u8(m.flag);
          if (m.flag == 0) {
            payload.u64(m.plain.size());
            for (double v : m.plain) payload.f64(v);
          } else {
            payload.u64(m.masked.size());
            for (uint64_t v : m.masked) payload.u64(v);
          }
          payload.str(m.metrics_json);
        } else if constexpr (std::is_same_v<T, AckMsg>) {
          // empty payload
        } else if constexpr (std::is_same_v<T, DoneMsg>) {
          payload.u32(m.final_round);
        }
      },
      msg);

  std::vector<uint8_t> body = payload.take();
  ByteWriter frame;
  frame.u8(kWireMagic0);
  frame.u8(kWireMagic1);
  frame.u8(kWireVersion);
  frame.u8(uint8_t(message_type(msg)));
  frame.u64(body.size());
  frame.bytes(body.data(), body.size());
  return frame.take();
}

Message decode_message(const uint8_t* data, size_t len) {
  const FrameHeader header = decode_frame_header(data, len);
  const size_t expected = kFrameHeaderSize + size_t(header.payload_len);
  if (len < expected) {
    throw DecodeError(DecodeErrorCode::kTruncated, "truncated payload");
  }
  if (len > expected) {
    throw DecodeError(DecodeErrorCode::kLengthMismatch,
                      "frame longer than payload_len declares");
  }
  ByteReader r(data + kFrameHeaderSize, size_t(header.payload_len));
  Message msg;
  switch (header.type) {
    case MsgType::kError: {
      ErrorMsg m;
      m.code = r.u16();
      m.text = r.str();
      msg = std::move(m);
      break;
    }
    case MsgType::kRegister: {
      RegisterMsg m;
      m.token = r.str();
      m.name = r.str();
      msg = std::move(m);
      break;
    }
    case MsgType::kRegisterAck: {
      RegisterAckMsg m;
      m.client_id = r.u32();
      r.raw(m.config_digest.data(), m.config_digest.size());
      msg = m;
      break;
    }
    case MsgType::kGetModel: {
      GetModelMsg m;
      m.client_id = r.u32();
      msg = m;
      break;
    }
    case MsgType::kModel: {
      ModelMsg m;
      m.round = r.u32();
      const uint64_t dim = checked_dim(r);
      m.params.resize(dim);
      for (uint64_t i = 0; i < dim; ++i) m.params[i] = r.f64();
      m.metadata_json = checked_json(r, "model metadata");
      msg = std::move(m);
      break;
    }
    case MsgType::kUpdate: {
      UpdateMsg m;
      m.client_id = r.u32();
      m.round = r.u32();
      m.sample_count = r.u64();
      m.flag = r.u8();
      if (m.flag > 1) {
        throw DecodeError(DecodeErrorCode::kLengthMismatch,
                          "unknown update payload flag");
      }
      const uint64_t dim = checked_dim(r);
      if (m.flag == 0) {
        m.plain.resize(dim);
        for (uint64_t i = 0; i < dim; ++i) m.plain[i] = r.f64();
      } else {
        m.masked.resize(dim);
        for (uint64_t i = 0; i < dim; ++i) m.masked[i] = r.u64();
      }
      m.metrics_json = checked_json(r, "update metrics");
      msg = std::move(m);
      break;
    }
    case MsgType::kAck: {
      msg = AckMsg{};
      break;
    }
    case MsgType::kDone: {
      DoneMsg m;
      m.final_round = r.u32();
      msg = m;
      break;
    }
  }
  if (r.remaining() != 0) {
    throw DecodeError(DecodeErrorCode::kLengthMismatch,
                      "payload longer than its message");
  }
  return msg;
}

Message decode_message(const std::vector<uint8_t>& frame) {
  return decode_message(frame.data(), frame.size());
}

std::string metadata_to_json(const MetadataMap& metadata) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : metadata) {
    if (std::holds_alternative<double>(value)) {
      j[key] = std::get<double>(value);
    } else {
      j[key] = std::get<std::string>(value);
    }
  }
  return j.dump();
}

MetadataMap metadata_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.is_object()) {
    throw std::invalid_argument("metadata JSON must be an object");
  }
  MetadataMap out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_number()) {
      out[key] = value.get<double>();
    } else if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else {
      throw std::invalid_argument("metadata value must be number or string: " +
                                  key);
    }
  }
  return out;
}

std::string metric_entries_to_json(
    const std::vector<MetricsStore::Entry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    j.push_back({{"scope", e.scope},
                 {"round", e.round},
                 {"name", e.name},
                 {"value", e.value}});
  }
  return j.dump();
}

std::vector<MetricsStore::Entry> metric_entries_from_json(
    const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.is_array()) {
    throw std::invalid_argument("metric entries JSON must be an array");
  }
  std::vector<MetricsStore::Entry> out;
  for (const auto& item : j) {
    MetricsStore::Entry e;
    e.scope = item.at("scope").get<std::string>();
    e.round = item.at("round").get<uint64_t>();
    e.name = item.at("name").get<std::string>();
    e.value = item.at("value").get<double>();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace flk

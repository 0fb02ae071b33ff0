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

#ifndef FLK_SHA256_HPP_
#define FLK_SHA256_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace flk {

using Sha256Digest = std::array<uint8_t, 32>;

Sha256Digest sha256(const void* data, size_t len);
Sha256Digest sha256(const std::string& s);

std::string hex(const Sha256Digest& digest);

}  // namespace flk

#endif  // FLK_SHA256_HPP_

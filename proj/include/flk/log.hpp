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

#ifndef FLK_LOG_HPP_
#define FLK_LOG_HPP_

#include <sstream>
#include <string>

namespace flk {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Active level comes from the FLK_LOG environment variable
// ("error" | "info" | "debug"), read once per process. Default: error.
LogLevel log_level();

// Writes one line to stderr. Thread safe.
void log_line(LogLevel level, const std::string& text);

}  // namespace flk

#define FLK_LOG_AT(lvl, expr)                                             \
  do {                                                                    \
    if (static_cast<int>(lvl) <= static_cast<int>(::flk::log_level())) { \
      std::ostringstream flk_log_os_;                                     \
      flk_log_os_ << expr;                                                \
      ::flk::log_line(lvl, flk_log_os_.str());                            \
    }                                                                     \
  } while (0)

#define FLK_LOG_ERROR(expr) FLK_LOG_AT(::flk::LogLevel::kError, expr)
#define FLK_LOG_INFO(expr) FLK_LOG_AT(::flk::LogLevel::kInfo, expr)
#define FLK_LOG_DEBUG(expr) FLK_LOG_AT(::flk::LogLevel::kDebug, expr)

#endif  // FLK_LOG_HPP_

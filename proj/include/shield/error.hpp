/*
 * Copyright 2026 The SHIELD Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SHIELD_ERROR_HPP_
#define SHIELD_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace shield {

enum class ErrorKind {
  kShape,        // incompatible tensor shapes
  kDomain,       // argument outside a function's domain
  kUsage,        // API misuse (non-scalar loss, bad argument ranges)
  kFormat,       // malformed file contents
  kConsistency,  // files or records that disagree with each other
  kNumeric,      // non-finite values or singular systems
  kIo,
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kConsistency: return "consistency error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

// Every failure raised by the library. The message is prefixed with the kind
// so diagnostics stay readable when only what() is printed.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace shield

#endif  // SHIELD_ERROR_HPP_

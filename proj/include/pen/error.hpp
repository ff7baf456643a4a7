// Copyright 2026 The PEN Toolkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pen {

enum class ErrorKind {
  kEmptyPage,
  kEmptyPassage,
  kOutOfBounds,
  kInvalidArgument,
  kTooLarge,
  kUnchunkable,
  kRuleConflict,
  kEndpointFailure,
  kTimeout,
  kEmptyReference,
  kConfigError,
  kMissingInput,
  kStoreCorruption,
  kNotFound,
  kFormatError,
  kConflict,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyPage: return "EmptyPage";
    case ErrorKind::kEmptyPassage: return "EmptyPassage";
    case ErrorKind::kOutOfBounds: return "OutOfBounds";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kTooLarge: return "TooLarge";
    case ErrorKind::kUnchunkable: return "Unchunkable";
    case ErrorKind::kRuleConflict: return "RuleConflict";
    case ErrorKind::kEndpointFailure: return "EndpointFailure";
    case ErrorKind::kTimeout: return "Timeout";
    case ErrorKind::kEmptyReference: return "EmptyReference";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kMissingInput: return "MissingInput";
    case ErrorKind::kStoreCorruption: return "StoreCorruption";
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kFormatError: return "FormatError";
    case ErrorKind::kConflict: return "Conflict";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pen

// Copyright 2026 The Crowdbots Authors
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

#ifndef CROWDBOTS_ERRORS_H_
#define CROWDBOTS_ERRORS_H_

#include <stdexcept>
#include <string>

namespace crowdbots {

// Every error carries a short machine-parseable code ("unknown_species",
// "dimension_mismatch", ...) alongside the human-readable message. The CLI
// prints "error: <code>: <message>" on a single line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error("dimension_mismatch", message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("malformed_input", message) {}
};

}  // namespace crowdbots

#endif  // CROWDBOTS_ERRORS_H_

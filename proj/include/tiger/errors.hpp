// Copyright 2026 The tiger-cpp Authors.
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

#ifndef TIGER_ERRORS_HPP_
#define TIGER_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace tiger {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,      // bad arguments, config keys, preconditions
  kData,       // unreadable or malformed input files
  kNumeric,    // non-finite values, training divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace tiger

#endif  // TIGER_ERRORS_HPP_

/*
 * Copyright 2026 The distilrank Authors.
 *
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

#ifndef DISTILRANK_ERRORS_HPP
#define DISTILRANK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace distilrank {

// Error categories; mirrored by the dr_status codes of the C API.
enum class ErrorCode {
  Io = 1,        // unreadable/unwritable file
  Format = 2,    // malformed file contents
  Param = 3,     // invalid argument value
  Shape = 4,     // tensor dimension mismatch
  Vocab = 5,     // out-of-range token id
  State = 6,     // wrong pipeline stage / missing head
  Usage = 7,     // API misuse (non-scalar loss, missing grad, ...)
  Lookup = 8,    // unknown document / query
  Internal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorCode::Format, m) {}
};
struct ParamError : Error {
  explicit ParamError(const std::string& m) : Error(ErrorCode::Param, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCode::Shape, m) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error(ErrorCode::Param, m) {}
};
struct VocabError : Error {
  explicit VocabError(const std::string& m) : Error(ErrorCode::Vocab, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorCode::State, m) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error(ErrorCode::Usage, m) {}
};
struct LookupError : Error {
  explicit LookupError(const std::string& m) : Error(ErrorCode::Lookup, m) {}
};

}  // namespace distilrank

#endif  // DISTILRANK_ERRORS_HPP

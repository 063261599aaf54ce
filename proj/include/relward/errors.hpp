// Copyright 2026 The relward Authors.
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

namespace relward {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value or shape supplied by the caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (bad magic, truncated chunk, unparsable line).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed file carrying a variant we do not read (rate, channels, bits).
class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Input that makes an operation undefined, e.g. zero signal power.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Broken internal contract: inconsistent shapes between stages, missing
/// forward cache, incompatible checkpoint.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Dataset-level problem: empty manifest, unreadable clip.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace relward

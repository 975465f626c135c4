// Copyright 2026 The n2dvc Authors.
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

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dvc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing on-disk data (metadata files, wav headers, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data that parses but breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation's precondition (shapes, counts, unknown ids).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Warning diagnostics. The default sink writes "warning: <msg>" to stderr.
using WarningSink = std::function<void(std::string_view)>;
void warn(std::string_view message);
// Installs a sink and returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace dvc

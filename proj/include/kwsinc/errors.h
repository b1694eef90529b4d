// Copyright (c) 2026 kwsinc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KWSINC_ERRORS_H_
#define KWSINC_ERRORS_H_

#include <stdexcept>
#include <string>

namespace kwsinc {

// Invalid or inconsistent experiment/corpus configuration. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corpus or results files that cannot be read. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

// Malformed tabular text; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Out-of-range scalar argument (temperature, perturbation magnitude, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violated precondition between components (shape mismatch, head size, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Failure inside one stage of an experiment run.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, int exit_code)
      : std::runtime_error("[" + stage + "] " + what),
        stage_(std::move(stage)),
        exit_code_(exit_code) {}
  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

}  // namespace kwsinc

#endif  // KWSINC_ERRORS_H_

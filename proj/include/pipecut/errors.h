// Copyright 2026 The Pipecut Authors
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

#ifndef PIPECUT_ERRORS_H_
#define PIPECUT_ERRORS_H_

#include <stdexcept>
#include <string>
#include <vector>

namespace pipecut {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> details)
      : Error(what), details_(std::move(details)) {}
  explicit ValidationError(const std::string& what) : Error(what) {}

  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

class NoNonConstantTask : public Error {
 public:
  using Error::Error;
};

class DanglingOutput : public Error {
 public:
  using Error::Error;
};

class UnsupportedDepth : public Error {
 public:
  using Error::Error;
};

// An atom alone exceeds device memory.
class InfeasibleAtom : public Error {
 public:
  using Error::Error;
};

class CompactionStuck : public Error {
 public:
  using Error::Error;
};

class InvalidArgs : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class InvalidPlan : public Error {
 public:
  using Error::Error;
};

}  // namespace pipecut

#endif  // PIPECUT_ERRORS_H_

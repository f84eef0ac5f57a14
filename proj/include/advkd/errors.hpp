// Copyright 2026 The advkd Authors.
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

namespace advkd {

// Two families: input/contract problems (operator can fix the request) and
// pipeline problems (something downstream failed). The CLI maps them to
// exit codes 2 and 3 respectively.

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PipelineFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite numeric input, empty pool, k out of range.
class DomainError : public ValidationFailure {
 public:
  using ValidationFailure::ValidationFailure;
};

/// A required template or config parameter is missing or malformed.
class ParameterError : public ValidationFailure {
 public:
  ParameterError(std::string field, const std::string& what)
      : ValidationFailure(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Structured extraction found nothing usable in a generation.
class ParseError : public ValidationFailure {
 public:
  ParseError(const std::string& what, std::string excerpt)
      : ValidationFailure(what), excerpt_(std::move(excerpt)) {}
  const std::string& excerpt() const noexcept { return excerpt_; }

 private:
  std::string excerpt_;
};

/// A record violates a store invariant.
class ValidationError : public ValidationFailure {
 public:
  ValidationError(std::string field, const std::string& what)
      : ValidationFailure(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ExportError : public ValidationFailure {
 public:
  using ValidationFailure::ValidationFailure;
};

class SchemaError : public ValidationFailure {
 public:
  using ValidationFailure::ValidationFailure;
};

class NotFoundError : public ValidationFailure {
 public:
  using ValidationFailure::ValidationFailure;
};

class MigrationError : public ValidationFailure {
 public:
  MigrationError(int found, int expected)
      : ValidationFailure("state schema version " + std::to_string(found) +
                          " cannot be loaded by this build (expects " +
                          std::to_string(expected) + ")"),
        found_(found),
        expected_(expected) {}
  int found() const noexcept { return found_; }
  int expected() const noexcept { return expected_; }

 private:
  int found_;
  int expected_;
};

class IoError : public PipelineFailure {
 public:
  using PipelineFailure::PipelineFailure;
};

/// Connection failures, timeouts, and retryable statuses that never cleared.
class TransportError : public PipelineFailure {
 public:
  using PipelineFailure::PipelineFailure;
};

/// Non-retryable or persistent non-2xx response.
class EndpointError : public PipelineFailure {
 public:
  EndpointError(int status, std::string body_excerpt)
      : PipelineFailure("endpoint returned HTTP " + std::to_string(status) +
                        ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

/// The endpoint cannot return per-token log-probabilities.
class CapabilityError : public PipelineFailure {
 public:
  using PipelineFailure::PipelineFailure;
};

/// Returned token offsets do not place a token start at the completion.
class AlignmentError : public PipelineFailure {
 public:
  using PipelineFailure::PipelineFailure;
};

class PipelineError : public PipelineFailure {
 public:
  using PipelineFailure::PipelineFailure;
};

}  // namespace advkd

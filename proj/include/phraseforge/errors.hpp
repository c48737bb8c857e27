// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace phraseforge {

/// Base of every error raised by the library. The CLI maps subclasses to exit
/// codes: ConfigError and NotFoundError are usage errors (2), the rest are
/// runtime failures (1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Connection, timeout or I/O failure talking to a remote service. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Remote peer answered, but the answer violates the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Persisted file is truncated, has a bad header, or belongs to another corpus.
class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace phraseforge

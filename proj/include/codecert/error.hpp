// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace codecert {

/// Root of every error thrown by the library. Subclasses map one-to-one
/// onto the CLI exit codes (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Data errors: bad source text, bad records, misaligned snippets.
class DataError : public Error {
 public:
  using Error::Error;
};

class LexError : public DataError {
 public:
  LexError(std::size_t offset, const std::string& what)
      : DataError("lexing error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IdentifierError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class PerturbationError : public DataError {
 public:
  using DataError::DataError;
};

class AdapterError : public Error {
 public:
  using Error::Error;
};

/// Connection failures, timeouts, dead child processes. Retried.
class TransportError : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

/// The peer answered but broke the wire contract. Never retried.
class MalformedResponseError : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class LabelSpaceError : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

class NumericsError : public Error {
 public:
  using Error::Error;
};

inline int exit_code_for(const Error& e) noexcept {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const AdapterError*>(&e)) return 3;
  if (dynamic_cast<const NumericsError*>(&e)) return 4;
  return 2;
}

}  // namespace codecert

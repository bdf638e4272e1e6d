#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace udistill {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Network or HTTP failure that survived the retry policy.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class CacheCorruption : public Error {
 public:
  using Error::Error;
};

// The backend lacks a capability a method needs (e.g. token logprobs).
class UnsupportedBackend : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Every request of a batch failed; the message summarizes the causes.
class BatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace udistill

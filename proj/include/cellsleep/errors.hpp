#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cellsleep {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A user cannot be served at all (e.g. zero SINR).
class InfeasibleUserError : public Error {
 public:
  using Error::Error;
};

/// Demanded resource blocks exceed what the base station owns.
class OverloadError : public Error {
 public:
  using Error::Error;
};

/// Vector or network shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A request exceeds a hard size cap (e.g. exhaustive search width).
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Wraps a failure with the pipeline stage that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace cellsleep

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tailflow {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Misuse of the autodiff tape (foreign or consumed tape, no active tape).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A density evaluation produced a non-finite intermediate. `stage` is the
// index of the offending layer, or -1 for the base distribution.
class EvaluationFault : public std::runtime_error {
 public:
  EvaluationFault(int stage, const std::string& what)
      : std::runtime_error(what), stage_(stage) {}

  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tailflow

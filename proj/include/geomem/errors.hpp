#pragma once

#include <stdexcept>
#include <string>

namespace geomem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent arguments (dimension mismatch, bad file, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Too few points or rank-deficient geometry for a closed-form solve.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DuplicateError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Pipeline failure tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace geomem

/**
 * @file errors.h
 * @brief Exception hierarchy shared by every module.
 *
 * Each error carries the process exit code the CLI reports for it:
 * 1 = usage, 2 = data, 3 = training divergence.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace sandwich {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 2)
      : std::runtime_error(what), exit_code_(exit_code) {}

  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

#define SANDWICH_DATA_ERROR(Name)                                      \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

SANDWICH_DATA_ERROR(ParseError);
SANDWICH_DATA_ERROR(EmptyFileError);
SANDWICH_DATA_ERROR(KeyEstimationError);
SANDWICH_DATA_ERROR(TooShortError);
SANDWICH_DATA_ERROR(NoPairsError);
SANDWICH_DATA_ERROR(ShapeError);
SANDWICH_DATA_ERROR(RangeError);
SANDWICH_DATA_ERROR(IoError);
SANDWICH_DATA_ERROR(NoInputError);
SANDWICH_DATA_ERROR(EmptyInputError);
SANDWICH_DATA_ERROR(ProvenanceError);
SANDWICH_DATA_ERROR(MissingPretrainError);

#undef SANDWICH_DATA_ERROR

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("UsageError: " + what, 1) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("DivergenceError: " + what, 3) {}
};

}  // namespace sandwich

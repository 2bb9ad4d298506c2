#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedfmc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter vectors, Fisher diagonals or datasets whose shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// A non-finite loss or parameter appeared during local training.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedfmc

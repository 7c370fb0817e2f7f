#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lgv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rollout produced a non-finite state or one exceeding the divergence bound.
class IntegrationDiverged : public Error {
 public:
  IntegrationDiverged(std::size_t step, const std::string& what)
      : Error("integration diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class SingularMassError : public Error {
 public:
  using Error::Error;
};

class DegenerateDirectionError : public Error {
 public:
  using Error::Error;
};

class UnderactuatedError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgv

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace goco {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTopologyError : public Error {
 public:
  using Error::Error;
};

// Requested placement cannot be realized (e.g. d_k > n).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// A device asked for a neighbor message it never received.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// p = 1 or gamma*rho <= 0 in the theory constants.
class DegenerateRegimeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : Error(what), iteration_(iteration) {}

  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

}  // namespace goco

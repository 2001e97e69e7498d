#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nsmc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments: non-positive precisions, empty inputs, mismatched sizes.
struct InvalidParameter : Error {
  using Error::Error;
};

// Factorization failure, divergent integral, non-SPD covariance.
struct NumericError : Error {
  using Error::Error;
};

// Evaluation outside the domain of a formula (e.g. M < 2 in the NSMC variance).
struct DomainError : Error {
  using Error::Error;
};

// Every outer weight vanished at step `step` (1-based time index).
struct WeightCollapse : Error {
  WeightCollapse(std::size_t step, const std::string& what)
      : Error("weight collapse at t=" + std::to_string(step) + ": " + what), step(step) {}
  std::size_t step;
};

// Every inner weight vanished at stage `stage` (0-based component index).
struct InnerCollapse : Error {
  InnerCollapse(std::size_t stage, const std::string& what)
      : Error("inner weight collapse at stage d=" + std::to_string(stage) + ": " + what),
        stage(stage) {}
  std::size_t stage;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidParameter(message);
}

}  // namespace nsmc

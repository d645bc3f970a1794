#pragma once

#include <stdexcept>
#include <string>

namespace gpgan {

// Input data failed a domain invariant (bad landmark set, malformed record).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller passed an out-of-contract argument (index, sigma, shape).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A network spec whose channel or spatial arithmetic does not chain.
struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing, corrupt, or mismatched checkpoint / weight asset.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or other condition that aborts optimization.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometrically degenerate input, e.g. coincident eye centers.
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gpgan

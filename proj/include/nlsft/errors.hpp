#pragma once

#include <stdexcept>
#include <string>

namespace nlsft {

/// Invalid physical or configuration input.
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (non-convergence, conditioning, overflow).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix/vector dimensions or mode pairing.
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nlsft

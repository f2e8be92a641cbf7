#pragma once

#include <stdexcept>
#include <string>

namespace dassim {

// Numeric contract failure: non-SPD input, weight collapse, divergent
// iteration. The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration or CLI usage. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dassim

#pragma once

#include <stdexcept>

namespace idml {

// Invalid configuration (bad file, unknown key, out-of-range value). The CLI
// maps this to exit code 1; every other failure exits 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced non-finite values and cannot continue.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace idml

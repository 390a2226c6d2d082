#pragma once

#include <stdexcept>
#include <string>

namespace pointssm {

// Error categories map onto CLI exit codes: ConfigError -> 1, DataError -> 2,
// NumericError -> 3 (plain invalid_argument also exits 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf checks at op boundaries. On by default (test/training profile);
// the benchmark harness switches them off.
bool finite_checks_enabled();
void set_finite_checks(bool on);

}  // namespace pointssm

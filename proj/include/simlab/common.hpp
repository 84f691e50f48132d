#pragma once

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ConfigError/DataError -> 2, ContractError and training divergence -> 3.

#include <stdexcept>
#include <string>

namespace simlab {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown keys, invalid values, broken invariants.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Bad input data: unparsable files, empty datasets, malformed rows.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data: " + msg) {}
};

// Violated internal contract: shape mismatches, out-of-range ids, NaN states.
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

}  // namespace simlab

#pragma once

#include <stdexcept>
#include <string>

namespace zsd {

// Error categories aligned with the CLI exit codes:
//   ConfigError -> 1 (usage / invalid configuration)
//   DataError   -> 2 (malformed or inconsistent data files)
//   NumericError-> 3 (non-finite values, failed numerical checks)
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace zsd

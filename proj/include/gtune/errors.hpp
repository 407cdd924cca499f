#pragma once

#include <stdexcept>

namespace gtune {

// Bad arguments, paths, or configuration. The CLI maps this to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data encountered mid-run. CLI exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gtune

#pragma once

#include <stdexcept>
#include <string>

namespace bic {

// Invalid or inconsistent run configuration. CLI maps this to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape/axis violations.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset parse or integrity failures.
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values and other numeric breakdowns.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of the training machinery (e.g. stepping without gradients).
struct train_error : std::runtime_error {
    explicit train_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bic

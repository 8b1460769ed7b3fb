#pragma once

#include <stdexcept>
#include <string>

namespace wamo {

// Error categories map 1:1 onto CLI exit codes (see tools/wamo_cli.cpp).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wamo

#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

/// Bad user input: malformed files, inconsistent configs, invalid scenarios.
/// The CLI maps it to exit code 1; everything else is a runtime failure.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmf

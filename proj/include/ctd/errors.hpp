#ifndef CTD_ERRORS_HPP
#define CTD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ctd {

// Dimension mismatches, bad option values, inconsistent weight metadata.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (weights, configs, datasets).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values and degenerate numerical situations.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctd

#endif

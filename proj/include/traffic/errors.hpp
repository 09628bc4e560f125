#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace traffic {

/// Invalid or inconsistent configuration values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Environment construction failed (e.g. vehicles cannot be placed).
struct SetupError : std::runtime_error {
  explicit SetupError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Model file is corrupt or has an unsupported format version.
struct ModelFormatError : std::runtime_error {
  explicit ModelFormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Loaded model does not match the requested observation geometry.
struct ModelCompatError : std::runtime_error {
  explicit ModelCompatError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed text input; carries file and 1-based line number.
struct ParseError : std::runtime_error {
  ParseError(std::string file_, size_t line_, const std::string& what)
      : std::runtime_error(file_ + ":" + std::to_string(line_) + ": " + what),
        file(std::move(file_)),
        line(line_) {}
  std::string file;
  size_t line;
};

}  // namespace traffic

#pragma once

#include <stdexcept>
#include <string>

namespace roadguard {

/// Structural failure: malformed JSON, truncated packet bytes, bad file.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Semantic failure: well-formed input violating a domain rule.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad run configuration (unknown vehicle in a scenario, missing map, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace roadguard

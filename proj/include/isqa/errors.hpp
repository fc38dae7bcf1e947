#pragma once

#include <stdexcept>
#include <string>

namespace isqa {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class ContractError : public Error {
public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class ProtocolError : public Error {
public:
  explicit ProtocolError(const std::string& what) : Error("protocol", what) {}
};

class GenerationError : public Error {
public:
  explicit GenerationError(const std::string& what) : Error("generation", what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class TrainingError : public Error {
public:
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace isqa

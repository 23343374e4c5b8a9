#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jdsi {

// Every failure raised by the library carries a short machine-readable code
// so the CLI can print a stable error line.
class Error : public std::runtime_error
{
public:
  Error(std::string code, std::string const &what)
    : std::runtime_error(what)
    , code_(std::move(code))
  {
  }
  std::string const &code() const { return code_; }

private:
  std::string code_;
};

struct InvalidInput : Error
{
  explicit InvalidInput(std::string const &w) : Error("invalid-input", w) {}
};

struct ShapeError : Error
{
  explicit ShapeError(std::string const &w) : Error("shape-mismatch", w) {}
};

struct ParameterError : Error
{
  explicit ParameterError(std::string const &w) : Error("parameter", w) {}
};

struct CalibrationError : Error
{
  explicit CalibrationError(std::string const &w) : Error("calibration", w) {}
};

struct DivergenceError : Error
{
  explicit DivergenceError(std::string const &w) : Error("divergence", w) {}
};

struct ConfigError : Error
{
  explicit ConfigError(std::string const &w) : Error("config", w) {}
};

struct UsageError : Error
{
  explicit UsageError(std::string const &w) : Error("usage", w) {}
};

struct ScenarioError : Error
{
  explicit ScenarioError(std::string const &w) : Error("scenario", w) {}
};

class FormatError : public Error
{
public:
  FormatError(std::string const &w, std::uint64_t offset)
    : Error("format", w + " at byte " + std::to_string(offset))
    , offset_(offset)
  {
  }
  std::uint64_t offset() const { return offset_; }

private:
  std::uint64_t offset_;
};

} // namespace jdsi

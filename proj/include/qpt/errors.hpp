#pragma once
#include <stdexcept>
#include <string>

namespace qpt {

// Three error families, mapped to CLI exit codes:
//   ConfigError -> 2 (validation), NumericError -> 3, IoError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// validation family
struct PacketTooWide : ConfigError {
  using ConfigError::ConfigError;
};
struct WindowTooSmall : ConfigError {
  using ConfigError::ConfigError;
};
struct EnergyNotInFrame : ConfigError {
  using ConfigError::ConfigError;
};

// numerical family
struct StepTooLarge : NumericError {
  using NumericError::NumericError;
};
struct ContainmentViolated : NumericError {
  using NumericError::NumericError;
};
struct HyperbolicInput : NumericError {
  using NumericError::NumericError;
};
struct NotConverged : NumericError {
  using NumericError::NumericError;
};
struct NoContraction : NumericError {
  using NumericError::NumericError;
};
struct EmptyFrame : NumericError {
  using NumericError::NumericError;
};
struct GridTooCoarse : NumericError {
  using NumericError::NumericError;
};
struct QuadratureUnderResolved : NumericError {
  using NumericError::NumericError;
};

}  // namespace qpt

#pragma once

#include <stdexcept>
#include <string>

namespace respfit {

/// Malformed or unsupported input file contents.
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string &msg) : std::runtime_error(msg) {}
};

/// A breath cycle whose landmarks cannot support identification
/// (zero tidal volume, plateau equal to PEEP, zero peak flow, ...).
class DegenerateCycleError : public std::runtime_error {
public:
  explicit DegenerateCycleError(const std::string &msg)
      : std::runtime_error(msg) {}
};

/// Simulated ventilation drove the volume outside the patient's
/// pressure-volume envelope (settings exceed TLC or fall below FRC).
class EnvelopeError : public std::runtime_error {
public:
  explicit EnvelopeError(const std::string &msg) : std::runtime_error(msg) {}
};

/// Internal inconsistency while generating a simulated recording.
class SimulationStateError : public std::runtime_error {
public:
  explicit SimulationStateError(const std::string &msg)
      : std::runtime_error(msg) {}
};

} // namespace respfit

#pragma once
#include <stdexcept>
#include <string>

namespace cdl {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Region pair handed to a relation classifier has intersecting interiors.
struct OverlappingRegions : Error {
  using Error::Error;
};

/// A smearing or kick profile extends past the cavity or the simulated window.
struct SupportOutsideDomain : Error {
  using Error::Error;
};

/// A 2x-refinement self-check moved a result by more than the declared tolerance.
struct QuadratureNotConverged : Error {
  using Error::Error;
};

/// Scenario geometry fails the precondition of the requested experiment.
struct GeometryViolation : Error {
  using Error::Error;
};

/// Scenario file failed validation; message names the offending field path.
struct SchemaError : Error {
  using Error::Error;
};

/// Halving the integrator step moved the result beyond tolerance.
struct StepTooCoarse : Error {
  using Error::Error;
};

/// Fock cutoff too small for the requested kick amplitude.
struct TruncationLeak : Error {
  using Error::Error;
};

}  // namespace cdl

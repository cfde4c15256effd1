#pragma once
#include <optional>
#include <vector>

#include "cdl/detector.hpp"
#include "cdl/field.hpp"

namespace cdl {

/// Exact-oracle sizing: which modes to retain, Fock cutoff, integrator step.
struct OracleSpec {
  std::vector<int> modes;  ///< explicit retained mode indices; empty = auto-select
  int mode_count = 3;      ///< auto-selection size when modes is empty
  int fock_cutoff = 4;
  double dt = 0.01;
};

struct GridSpec {
  int n_t = 481;        ///< shared uniform time grid for the Dyson engine
  int quad_order = 48;  ///< Gauss-Legendre order per support axis
};

struct Tolerances {
  double quadrature_rel = 1e-4;  ///< 2x-refinement acceptance for reported coefficients
  double unitarity = 1e-8;
  double step_rel = 1e-4;        ///< dt-halving acceptance in scattering verification
};

/// One experiment setup: field, detectors, optional kick, time window, resolutions.
struct Scenario {
  FieldSpec field;
  std::vector<DetectorSpec> detectors;
  std::optional<Kick> kick;
  double t0 = 0.0;
  double t1 = 1.0;
  GridSpec grid;
  OracleSpec oracle;
  Tolerances tol;

  const DetectorSpec* find(DetectorLabel l) const;
  const DetectorSpec& require(DetectorLabel l) const;  // throws GeometryViolation

  /// All supports strictly inside the window and the cavity; wrap-around
  /// validator: window duration < (L - spatial extent) / 2.
  void validate() const;

  /// Retained oracle modes: explicit list, or the mode_count indices with the
  /// largest summed |form factor| over detectors (and kick when present).
  std::vector<int> retained_modes() const;
};

}  // namespace cdl

#pragma once
// Small scenario builders shared between unit and acceptance tests.
#include "cdl/scenario.hpp"

namespace cdl_test {

using namespace cdl;

inline DetectorSpec det(DetectorLabel l, double gap, double lam, double tc, double tw, double xc,
                        double xw, const Matrix2c& init) {
  DetectorSpec d;
  d.label = l;
  d.gap = gap;
  d.coupling = lam;
  d.smearing = SmearingProfile{tc, tw, xc, xw, false};
  d.initial_state = init;
  return d;
}

// Single ground-state detector in the vacuum; oracle keeps 3 modes.
inline Scenario respond_scenario() {
  Scenario s;
  s.field = FieldSpec{20.0, 1.0, 64};
  s.detectors = {det(DetectorLabel::A, 1.0, 0.05, 0.5, 0.5, 0.0, 0.5, ground_state())};
  s.t0 = -0.1;
  s.t1 = 1.1;
  s.oracle.modes = {-1, 0, 1};
  s.oracle.fock_cutoff = 5;
  s.oracle.dt = 0.005;
  return s;
}

// A in |+> so it sources a mean field; B ground. Spacelike or timelike layout,
// with A's switching finished before B's begins.
inline Scenario nosignal_scenario(bool spacelike) {
  Scenario s;
  s.field = FieldSpec{20.0, 1.0, 64};
  s.detectors = {det(DetectorLabel::A, 1.0, 0.05, 0.5, 0.5, 0.0, 0.5, plus_state()),
                 det(DetectorLabel::B, 1.0, 0.05, 2.0, 0.5, spacelike ? 6.2 : 0.0, 0.5,
                     ground_state())};
  s.t0 = -0.1;
  s.t1 = 2.6;
  s.oracle.modes = {-1, 0, 1};
  s.oracle.fock_cutoff = 4;
  s.oracle.dt = 0.005;
  return s;
}

// Fig. 2 layout with the kick playing region C: kick spacelike from B, wide A
// straddling both cones, A and B overlapping in time. B sits at
// x_kick + L/4, the universal node of every odd cavity mode, and the oracle
// retains odd modes only; see the sorkin experiment notes in the README.
inline Scenario sorkin_scenario(double xw_a = 2.2, double lam_a = 0.4, double lam_f = 1.0) {
  Scenario s;
  s.field = FieldSpec{20.0, 1.0, 64};
  DetectorSpec a = det(DetectorLabel::A, 1.2, lam_a, 1.15, 1.05, 0.0, xw_a, ground_state());
  if (xw_a == 0.0) a.smearing = SmearingProfile{1.15, 1.05, 0.0, 0.0, true};
  s.detectors = {a, det(DetectorLabel::B, 1.2, 0.3, 2.0, 0.6, 2.5, 0.4, ground_state())};
  s.kick = Kick{SpacetimeFunction::separable_bump(-0.25, 0.25, -2.5, 0.4), lam_f};
  s.t0 = -0.55;
  s.t1 = 2.65;
  s.oracle.modes = {-3, -1, 1, 3};
  s.oracle.fock_cutoff = 4;
  s.oracle.dt = 0.01;
  return s;
}

// Three weakly coupled detectors for the K-order probe: C sources (|+>),
// A straddles, B reads (|+>). Couplings double as finite-difference steps.
inline Scenario korder_scenario() {
  Scenario s;
  s.field = FieldSpec{20.0, 1.0, 64};
  s.detectors = {det(DetectorLabel::A, 1.2, 0.2, 1.15, 1.05, 0.0, 2.2, plus_state()),
                 det(DetectorLabel::B, 1.2, 0.2, 2.0, 0.6, 2.5, 0.4, plus_state()),
                 det(DetectorLabel::C, 1.2, 0.2, -0.25, 0.25, -2.5, 0.4, plus_state())};
  s.t0 = -0.55;
  s.t1 = 2.65;
  s.oracle.modes = {-3, -1, 1, 3};
  s.oracle.fock_cutoff = 3;
  s.oracle.dt = 0.01;
  return s;
}

}  // namespace cdl_test

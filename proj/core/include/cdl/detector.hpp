#pragma once
#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cdl/field.hpp"
#include "cdl/profiles.hpp"

namespace cdl {

using Matrix2c = Eigen::Matrix2cd;

enum class DetectorLabel { A, B, C };
const char* to_string(DetectorLabel l);
DetectorLabel label_from_string(const std::string& s);

/// Monopole current e^{i gap t} sigma+ + e^{-i gap t} sigma- in the fixed
/// {ground, excited} basis (index 0 = ground). Hermitian, squares to identity.
Matrix2c monopole(double t, double gap);

/// Qubit basis states and common density matrices.
Matrix2c ground_state();
Matrix2c excited_state();
Matrix2c plus_state();
Matrix2c bloch_state(double rx, double ry, double rz);

/// Static qubit detector coupled through a separable compact smearing.
struct DetectorSpec {
  DetectorLabel label = DetectorLabel::A;
  double gap = 1.0;       ///< qubit angular frequency Omega
  double coupling = 0.0;  ///< lambda
  SmearingProfile smearing;
  Matrix2c initial_state = ground_state();
  /// Hermitian current at time t; defaults to the monopole with this->gap.
  std::function<Matrix2c(double)> current;

  Matrix2c current_at(double t) const {
    return current ? current(t) : monopole(t, gap);
  }
  void validate() const;  // Hermitian, unit-trace, PSD initial state; valid smearing
};

struct InteractionWeight {
  double scalar = 0.0;  ///< lambda * Lambda(e); 0 outside supp(Lambda)
  Matrix2c current;     ///< current operator at e.t
};

/// h(e) = lambda Lambda(e) J(e) (x) phi(e), detector-side factors.
/// For pointlike smearings the scalar carries chi(t) and the delta at x_center.
InteractionWeight interaction_weight(const DetectorSpec& d, const Event& e);

/// Spatial coefficients f_n = Int dx F(x) u_n(0, x) per mode, plus the switching,
/// enough to rebuild H(t) = lambda chi(t) mu(t) (x) sum_n (f_n e^{-i w_n t} a_n + h.c.).
struct DetectorFormFactor {
  int N = 0;
  std::vector<cplx> f;  // index n + N
  SmearingProfile smearing;

  cplx at(int n) const { return f[static_cast<std::size_t>(n + N)]; }
  double chi(double t) const { return smearing.chi(t); }
};

/// Throws SupportOutsideDomain if the smearing leaves the cavity.
DetectorFormFactor detector_form_factor(const DetectorSpec& d, const FieldSpec& spec,
                                        int quad_order = 48);

/// Same detector with pointlike_spatial set; switching unchanged. Idempotent.
DetectorSpec pointlike_limit(const DetectorSpec& d);

}  // namespace cdl

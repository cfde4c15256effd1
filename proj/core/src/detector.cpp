#include "cdl/detector.hpp"

#include <cmath>
#include <stdexcept>

#include "cdl/errors.hpp"
#include "cdl/quadrature.hpp"

namespace cdl {

const char* to_string(DetectorLabel l) {
  switch (l) {
    case DetectorLabel::A: return "A";
    case DetectorLabel::B: return "B";
    case DetectorLabel::C: return "C";
  }
  return "?";
}

DetectorLabel label_from_string(const std::string& s) {
  if (s == "A") return DetectorLabel::A;
  if (s == "B") return DetectorLabel::B;
  if (s == "C") return DetectorLabel::C;
  throw std::invalid_argument("detector label must be A, B or C, got '" + s + "'");
}

Matrix2c monopole(double t, double gap) {
  Matrix2c mu = Matrix2c::Zero();
  const cplx up = std::polar(1.0, gap * t);  // e^{i gap t}
  mu(1, 0) = up;              // sigma+ |g> -> |e|
  mu(0, 1) = std::conj(up);   // sigma-
  return mu;
}

Matrix2c ground_state() {
  Matrix2c r = Matrix2c::Zero();
  r(0, 0) = 1.0;
  return r;
}

Matrix2c excited_state() {
  Matrix2c r = Matrix2c::Zero();
  r(1, 1) = 1.0;
  return r;
}

Matrix2c plus_state() { return bloch_state(1.0, 0.0, 0.0); }

Matrix2c bloch_state(double rx, double ry, double rz) {
  Matrix2c r;
  // Bloch convention: |e><e| - |g><g| = sigma_z, so rz = +1 is the excited state.
  r(0, 0) = 0.5 * (1.0 - rz);
  r(1, 1) = 0.5 * (1.0 + rz);
  r(1, 0) = 0.5 * cplx(rx, ry);
  r(0, 1) = std::conj(r(1, 0));
  return r;
}

void DetectorSpec::validate() const {
  if (!smearing.valid()) throw std::invalid_argument("DetectorSpec: invalid smearing widths");
  const Matrix2c& r = initial_state;
  if ((r - r.adjoint()).norm() > 1e-12)
    throw std::invalid_argument("DetectorSpec: initial state not Hermitian");
  if (std::abs(r.trace().real() - 1.0) > 1e-12 || std::abs(r.trace().imag()) > 1e-12)
    throw std::invalid_argument("DetectorSpec: initial state trace != 1");
  Eigen::SelfAdjointEigenSolver<Matrix2c> es(r);
  if (es.eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("DetectorSpec: initial state not positive semidefinite");
}

InteractionWeight interaction_weight(const DetectorSpec& d, const Event& e) {
  InteractionWeight w;
  w.current = d.current_at(e.t);
  if (d.smearing.pointlike_spatial) {
    w.scalar = (e.x == d.smearing.x_center) ? d.coupling * d.smearing.chi(e.t) : 0.0;
  } else {
    w.scalar = d.coupling * d.smearing.value(e.t, e.x);
  }
  return w;
}

DetectorFormFactor detector_form_factor(const DetectorSpec& d, const FieldSpec& spec,
                                        int quad_order) {
  const SmearingProfile& s = d.smearing;
  DetectorFormFactor out;
  out.N = spec.N;
  out.smearing = s;
  out.f.assign(static_cast<std::size_t>(spec.n_modes()), cplx(0.0));
  if (s.pointlike_spatial) {
    if (s.x_center < -spec.L / 2 || s.x_center > spec.L / 2)
      throw SupportOutsideDomain("detector_form_factor: x_center outside the cavity");
    for (int n = -spec.N; n <= spec.N; ++n)
      out.f[static_cast<std::size_t>(n + spec.N)] =
          mode_function(n, Event{0.0, s.x_center}, spec);
    return out;
  }
  const Region sup = s.support();
  if (sup.x_min < -spec.L / 2 || sup.x_max > spec.L / 2)
    throw SupportOutsideDomain("detector_form_factor: smearing " + sup.str() +
                               " exits the cavity");
  GaussRule rx = gauss_on(sup.x_min, sup.x_max, quad_order);
  for (int n = -spec.N; n <= spec.N; ++n) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < rx.nodes.size(); ++j)
      acc += rx.weights[j] * s.F(rx.nodes[j]) * mode_function(n, Event{0.0, rx.nodes[j]}, spec);
    out.f[static_cast<std::size_t>(n + spec.N)] = acc;
  }
  return out;
}

DetectorSpec pointlike_limit(const DetectorSpec& d) {
  DetectorSpec p = d;
  p.smearing.pointlike_spatial = true;
  return p;
}

}  // namespace cdl

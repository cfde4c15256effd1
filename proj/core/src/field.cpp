#include "cdl/field.hpp"

#include <cmath>
#include <stdexcept>

#include "cdl/errors.hpp"
#include "cdl/quadrature.hpp"

namespace cdl {

double FieldSpec::k(int n) const { return 2.0 * M_PI * n / L; }

double FieldSpec::omega(int n) const {
  const double kn = k(n);
  return std::sqrt(kn * kn + m * m);
}

void FieldSpec::validate() const {
  if (!(L > 0.0)) throw std::invalid_argument("FieldSpec: L must be > 0");
  if (!(m > 0.0)) throw std::invalid_argument("FieldSpec: m must be > 0");
  if (N < 1) throw std::invalid_argument("FieldSpec: N must be >= 1");
}

cplx mode_function(int n, const Event& e, const FieldSpec& spec) {
  const double w = spec.omega(n), k = spec.k(n);
  const double phase = -(w * e.t - k * e.x);
  return std::polar(1.0 / std::sqrt(2.0 * w * spec.L), phase);
}

GaussianFieldState GaussianFieldState::vacuum() { return GaussianFieldState{}; }

GaussianFieldState GaussianFieldState::coherent(std::vector<cplx> alpha_by_mode) {
  GaussianFieldState s;
  s.kind = Kind::Coherent;
  s.alpha = std::move(alpha_by_mode);
  return s;
}

GaussianFieldState GaussianFieldState::thermal(std::vector<double> nbar_by_mode) {
  GaussianFieldState s;
  s.kind = Kind::Thermal;
  s.nbar = std::move(nbar_by_mode);
  return s;
}

GaussianFieldState GaussianFieldState::kicked_vacuum(const Kick& kick, const FieldSpec& spec,
                                                     int quad_order) {
  ModeFormFactor c = smeared_mode_coeffs(kick.f, spec, quad_order, /*rel_tol=*/-1.0);
  std::vector<cplx> alpha(c.c.size());
  for (std::size_t i = 0; i < c.c.size(); ++i) alpha[i] = cplx(0.0, kick.lambda_f) * c.c[i];
  return coherent(std::move(alpha));
}

void GaussianFieldState::validate(const FieldSpec& spec) const {
  const std::size_t n = static_cast<std::size_t>(spec.n_modes());
  if (kind == Kind::Coherent && alpha.size() != n)
    throw std::invalid_argument("GaussianFieldState: alpha size mismatch");
  if (kind == Kind::Thermal) {
    if (nbar.size() != n) throw std::invalid_argument("GaussianFieldState: nbar size mismatch");
    for (double v : nbar)
      if (v < 0.0) throw std::invalid_argument("GaussianFieldState: nbar must be >= 0");
  }
}

double pauli_jordan(const Event& x, const Event& y, const FieldSpec& spec) {
  const double dt = x.t - y.t, dx = x.x - y.x;
  // Pair n with -n: sin(w dt - k dx) + sin(w dt + k dx) = 2 sin(w dt) cos(k dx).
  double acc = std::sin(spec.m * dt) / spec.m;
  for (int n = 1; n <= spec.N; ++n) {
    const double w = spec.omega(n);
    acc += 2.0 * std::sin(w * dt) * std::cos(spec.k(n) * dx) / w;
  }
  return -acc / spec.L;
}

double pauli_jordan_modes(const Event& x, const Event& y, const FieldSpec& spec,
                          std::span<const int> modes) {
  const double dt = x.t - y.t, dx = x.x - y.x;
  double acc = 0.0;
  for (int n : modes) {
    const double w = spec.omega(n);
    acc += std::sin(w * dt - spec.k(n) * dx) / w;
  }
  return -acc / spec.L;
}

double mean_field(const GaussianFieldState& state, const Event& e, const FieldSpec& spec) {
  if (state.kind != GaussianFieldState::Kind::Coherent) return 0.0;
  cplx acc = 0.0;
  for (int n = -spec.N; n <= spec.N; ++n)
    acc += state.alpha[static_cast<std::size_t>(n + spec.N)] * mode_function(n, e, spec);
  return 2.0 * acc.real();
}

cplx wightman(const Event& x, const Event& y, const GaussianFieldState& state,
              const FieldSpec& spec) {
  cplx acc = 0.0;
  switch (state.kind) {
    case GaussianFieldState::Kind::Vacuum:
    case GaussianFieldState::Kind::Coherent:
      for (int n = -spec.N; n <= spec.N; ++n)
        acc += mode_function(n, x, spec) * std::conj(mode_function(n, y, spec));
      if (state.kind == GaussianFieldState::Kind::Coherent)
        acc += mean_field(state, x, spec) * mean_field(state, y, spec);
      return acc;
    case GaussianFieldState::Kind::Thermal:
      for (int n = -spec.N; n <= spec.N; ++n) {
        const cplx ux = mode_function(n, x, spec), uy = mode_function(n, y, spec);
        const double nb = state.nbar[static_cast<std::size_t>(n + spec.N)];
        acc += (nb + 1.0) * ux * std::conj(uy) + nb * std::conj(ux) * uy;
      }
      return acc;
  }
  return acc;
}

namespace {

ModeFormFactor coeffs_at_order(const SpacetimeFunction& g, const FieldSpec& spec, int order) {
  const Region& s = g.support;
  GaussRule rt = gauss_on(s.t_min, s.t_max, order);
  GaussRule rx = gauss_on(s.x_min, s.x_max, order);
  ModeFormFactor out;
  out.N = spec.N;
  out.c.assign(static_cast<std::size_t>(spec.n_modes()), cplx(0.0));
  // Sample g once; u_n^*(t,x) = exp(+i(w t - k x)) / sqrt(2 w L).
  std::vector<double> gv(static_cast<std::size_t>(order) * order);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j)
      gv[static_cast<std::size_t>(i) * order + j] =
          rt.weights[i] * rx.weights[j] * g(rt.nodes[i], rx.nodes[j]);
  for (int n = -spec.N; n <= spec.N; ++n) {
    const double w = spec.omega(n), k = spec.k(n);
    cplx it = 0.0;
    for (int i = 0; i < order; ++i) {
      const cplx et = std::polar(1.0, w * rt.nodes[i]);
      cplx ix = 0.0;
      for (int j = 0; j < order; ++j)
        ix += gv[static_cast<std::size_t>(i) * order + j] * std::polar(1.0, -k * rx.nodes[j]);
      it += et * ix;
    }
    out.c[static_cast<std::size_t>(n + spec.N)] = it / std::sqrt(2.0 * w * spec.L);
  }
  return out;
}

}  // namespace

ModeFormFactor smeared_mode_coeffs(const SpacetimeFunction& g, const FieldSpec& spec,
                                   int quad_order, double rel_tol) {
  const Region& s = g.support;
  if (s.x_min < -spec.L / 2 || s.x_max > spec.L / 2)
    throw SupportOutsideDomain("smeared_mode_coeffs: support " + s.str() + " exits the cavity [" +
                               std::to_string(-spec.L / 2) + "," + std::to_string(spec.L / 2) + "]");
  ModeFormFactor coarse = coeffs_at_order(g, spec, quad_order);
  if (rel_tol > 0.0) {
    ModeFormFactor fine = coeffs_at_order(g, spec, 4 * quad_order);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < coarse.c.size(); ++i) {
      num += std::norm(coarse.c[i] - fine.c[i]);
      den += std::norm(fine.c[i]);
    }
    if (den > 0.0 && std::sqrt(num / den) > rel_tol)
      throw QuadratureNotConverged("smeared_mode_coeffs: 4x refinement moved coefficients by " +
                                   std::to_string(std::sqrt(num / den)));
    return fine;
  }
  return coarse;
}

double classical_field(const Kick& kick, const Event& e, const FieldSpec& spec, int quad_order) {
  ModeFormFactor c = smeared_mode_coeffs(kick.f, spec, quad_order, /*rel_tol=*/-1.0);
  cplx acc = 0.0;
  for (int n = -spec.N; n <= spec.N; ++n)
    acc += cplx(0.0, 1.0) * c.at(n) * mode_function(n, e, spec);
  return 2.0 * kick.lambda_f * acc.real();
}

double smeared_commutator(const ModeFormFactor& c1, const ModeFormFactor& c2) {
  if (c1.N != c2.N) throw std::invalid_argument("smeared_commutator: cutoff mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < c1.c.size(); ++i) acc += std::imag(std::conj(c1.c[i]) * c2.c[i]);
  return 2.0 * acc;
}

double smeared_commutator(const SpacetimeFunction& g1, const SpacetimeFunction& g2,
                          const FieldSpec& spec, int quad_order) {
  ModeFormFactor c1 = smeared_mode_coeffs(g1, spec, quad_order, -1.0);
  ModeFormFactor c2 = smeared_mode_coeffs(g2, spec, quad_order, -1.0);
  return smeared_commutator(c1, c2);
}

}  // namespace cdl

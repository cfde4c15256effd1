#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cdl/errors.hpp"
#include "cdl/field.hpp"
#include "cdl/quadrature.hpp"

using namespace cdl;

namespace {
const FieldSpec kDefault{20.0, 1.0, 64};

SpacetimeFunction kick_bump(double tc, double tw, double xc, double xw) {
  return SpacetimeFunction::separable_bump(tc, tw, xc, xw);
}
}  // namespace

TEST_CASE("bump profile: compact support and frozen mass") {
  CHECK(bump(0.0) == doctest::Approx(1.0));
  CHECK(bump(1.0) == 0.0);
  CHECK(bump(-1.2) == 0.0);
  CHECK(bump_mass() == doctest::Approx(1.2069003224378512).epsilon(1e-12));
}

TEST_CASE("pauli_jordan: antisymmetry, equal time, regression value") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    Event x{u(rng), u(rng)}, y{u(rng), u(rng)};
    CHECK(pauli_jordan(x, y, kDefault) == doctest::Approx(-pauli_jordan(y, x, kDefault)).epsilon(1e-14));
  }
  CHECK(pauli_jordan(Event{1, 2}, Event{1, 2}, kDefault) == 0.0);
  // equal-time cancellation is exact at finite N (mode pairs +-n)
  CHECK(pauli_jordan(Event{0.33, 1.0}, Event{0.33, 6.0}, kDefault) == 0.0);
  CHECK(pauli_jordan(Event{1, 0}, Event{0, 0}, kDefault) ==
        doctest::Approx(-0.3797707062744035).epsilon(1e-14));
}

TEST_CASE("wightman: vacuum values, Hermitian symmetry, Im W = PJ/2") {
  auto vac = GaussianFieldState::vacuum();
  // x = y: real positive, equals sum 1/(2 w L)
  cplx same = wightman(Event{1, 2}, Event{1, 2}, vac, kDefault);
  CHECK(same.imag() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(same.real() == doctest::Approx(0.589283190819669).epsilon(1e-12));
  cplx w = wightman(Event{1, 0}, Event{0, 0}, vac, kDefault);
  CHECK(w.real() == doctest::Approx(-0.014333940286941406).epsilon(1e-12));
  CHECK(w.imag() == doctest::Approx(-0.18988535313720173).epsilon(1e-12));

  // thermal with all nbar = 0 degenerates to the vacuum
  auto th0 = GaussianFieldState::thermal(std::vector<double>(kDefault.n_modes(), 0.0));
  cplx wt = wightman(Event{1, 0}, Event{0, 0}, th0, kDefault);
  CHECK(std::abs(wt - w) < 1e-14);

  // state independence of the commutator: Im W = PJ/2 across states
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0), occ(0.0, 2.0);
  std::vector<double> nbar(kDefault.n_modes());
  std::vector<cplx> alpha(kDefault.n_modes());
  for (auto& v : nbar) v = occ(rng);
  for (auto& v : alpha) v = cplx(u(rng), u(rng)) * 0.1;
  auto th = GaussianFieldState::thermal(nbar);
  auto coh = GaussianFieldState::coherent(alpha);
  for (int i = 0; i < 20; ++i) {
    Event x{u(rng), u(rng)}, y{u(rng), u(rng)};
    const double pj = pauli_jordan(x, y, kDefault);
    CHECK(wightman(x, y, vac, kDefault).imag() == doctest::Approx(pj / 2).epsilon(1e-12));
    CHECK(wightman(x, y, th, kDefault).imag() == doctest::Approx(pj / 2).epsilon(1e-12));
    CHECK(wightman(x, y, coh, kDefault).imag() == doctest::Approx(pj / 2).epsilon(1e-12));
    CHECK(std::abs(wightman(x, y, th, kDefault) - std::conj(wightman(y, x, th, kDefault))) < 1e-13);
  }
}

TEST_CASE("smeared_mode_coeffs: zero function, reality pairing, refinement oracle") {
  SpacetimeFunction zero;
  zero.f = [](double, double) { return 0.0; };
  zero.support = Region{0, 1, 0, 1};
  ModeFormFactor cz = smeared_mode_coeffs(zero, kDefault);
  for (auto c : cz.c) CHECK(std::abs(c) == 0.0);

  // real g: the annihilation-side coefficient equals conj(c_n); check against
  // an independent direct quadrature of Int g u_n
  SpacetimeFunction g = kick_bump(0.0, 0.5, 0.0, 0.5);
  FieldSpec small{20.0, 1.0, 8};
  ModeFormFactor c = smeared_mode_coeffs(g, small);
  for (int n = -small.N; n <= small.N; ++n) {
    GaussRule rt = gauss_on(-0.5, 0.5, 80), rx = gauss_on(-0.5, 0.5, 80);
    cplx direct = 0.0;
    for (std::size_t i = 0; i < rt.nodes.size(); ++i)
      for (std::size_t j = 0; j < rx.nodes.size(); ++j)
        direct += rt.weights[i] * rx.weights[j] * g(rt.nodes[i], rx.nodes[j]) *
                  mode_function(n, Event{rt.nodes[i], rx.nodes[j]}, small);
    CHECK(std::abs(direct - std::conj(c.at(n))) < 1e-12);
  }

  // the high-resolution refinement self-check passes for the smooth bump
  CHECK_NOTHROW(smeared_mode_coeffs(g, kDefault, 48, 1e-9));
  // and a deliberately starved quadrature trips it
  CHECK_THROWS_AS(smeared_mode_coeffs(g, FieldSpec{20.0, 1.0, 128}, 4, 1e-12),
                  QuadratureNotConverged);
}

TEST_CASE("smeared_mode_coeffs rejects supports outside the cavity") {
  SpacetimeFunction g = kick_bump(0.0, 0.5, 9.8, 0.5);
  CHECK_THROWS_AS(smeared_mode_coeffs(g, kDefault), SupportOutsideDomain);
}

TEST_CASE("classical_field: zero kick, linearity, lightcone support") {
  Kick kick{kick_bump(0.5, 0.5, -3.0, 0.5), 0.0};
  CHECK(classical_field(kick, Event{2.5, -3.0}, kDefault) == 0.0);
  kick.lambda_f = 0.2;
  const double v1 = classical_field(kick, Event{2.5, -3.0}, kDefault);
  kick.lambda_f = 0.4;
  const double v2 = classical_field(kick, Event{2.5, -3.0}, kDefault);
  CHECK(v2 == doctest::Approx(2.0 * v1).epsilon(1e-12));  // exactly linear in lambda_f
  kick.lambda_f = 0.2;
  // timelike future of the kick: order-1e-2 signal
  CHECK(std::abs(v1) > 1e-3);
  // spacelike point: truncation floor only
  const double far = classical_field(kick, Event{2.5, 2.0}, kDefault);
  CHECK(std::abs(far) < 1e-6 * std::abs(v1) + 1e-12);
  // the mean of the kicked vacuum agrees with the closed form
  auto st = GaussianFieldState::kicked_vacuum(kick, kDefault);
  CHECK(mean_field(st, Event{2.5, -3.0}, kDefault) == doctest::Approx(v1).epsilon(1e-10));
}

TEST_CASE("smeared_commutator: antisymmetry and microcausality floor trend") {
  SpacetimeFunction g1 = kick_bump(0.5, 0.5, 0.0, 0.5);
  SpacetimeFunction g2s = kick_bump(1.5, 0.5, 3.1, 0.5);  // spacelike from g1
  SpacetimeFunction g2t = kick_bump(1.5, 0.5, 0.0, 0.5);  // timelike from g1
  CHECK(smeared_commutator(g1, g1, kDefault) == doctest::Approx(0.0).epsilon(1e-15));

  double prev = 1e300, timelike128 = 0.0, spacelike128 = 0.0;
  for (int N : {16, 32, 64, 128}) {
    FieldSpec spec{20.0, 1.0, N};
    const double s = std::abs(smeared_commutator(g1, g2s, spec));
    const double t = std::abs(smeared_commutator(g1, g2t, spec));
    CHECK(s < 1.1 * prev);  // decreasing up to 10% ripple
    prev = s;
    if (N == 128) {
      spacelike128 = s;
      timelike128 = t;
    }
  }
  CHECK(spacelike128 < 1e-3 * timelike128);
  // timelike value is stable under N refinement
  const double t64 = std::abs(smeared_commutator(g1, g2t, FieldSpec{20.0, 1.0, 64}));
  CHECK(timelike128 == doctest::Approx(t64).epsilon(1e-6));
}

TEST_CASE("pauli_jordan_modes matches the full sum on the full set") {
  std::vector<int> all;
  for (int n = -kDefault.N; n <= kDefault.N; ++n) all.push_back(n);
  Event x{1.3, 0.4}, y{0.1, -2.0};
  CHECK(pauli_jordan_modes(x, y, kDefault, all) ==
        doctest::Approx(pauli_jordan(x, y, kDefault)).epsilon(1e-13));
}

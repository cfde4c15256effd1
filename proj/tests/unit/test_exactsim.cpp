#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cdl/errors.hpp"
#include "cdl/exactsim.hpp"
#include "support/scenarios.hpp"

using namespace cdl;
using cdl_test::det;

namespace {

Scenario tiny_two_detector() {
  Scenario s = cdl_test::nosignal_scenario(false);
  s.oracle.modes = {-1, 1};
  s.oracle.fock_cutoff = 3;
  return s;
}

std::vector<DetectorLabel> labels(const Scenario& s) {
  std::vector<DetectorLabel> out;
  for (const auto& d : s.detectors) out.push_back(d.label);
  return out;
}

}  // namespace

TEST_CASE("SpaceInfo: ordering, caps, validation") {
  Scenario s = tiny_two_detector();
  SpaceInfo info = SpaceInfo::from_scenario(s);
  CHECK(info.qdim() == 4);
  CHECK(info.fdim() == 9);
  CHECK(info.dim() == 36);
  CHECK(info.qubit_index(DetectorLabel::A) == 0);
  CHECK(info.qubit_index(DetectorLabel::B) == 1);
  SpaceInfo bad = info;
  bad.fock_cutoff = 50;  // 4 * 2500 > 4096
  CHECK_THROWS(bad.validate());
  bad = info;
  bad.modes = {-2, -1, 0, 1, 2};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("hamiltonian_at: support gating and Hermiticity") {
  Scenario s = tiny_two_detector();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  auto all = eng.all_labels();
  CHECK(eng.hamiltonian_at(-0.05, all).norm() == 0.0);  // before every switching
  CHECK(eng.hamiltonian_at(1.25, all).norm() == 0.0);   // gap between A and B
  CHECK(eng.hamiltonian_at(0.5, {}).norm() == 0.0);     // empty subset: no interaction
  std::vector<double> zeros(s.detectors.size(), 0.0);
  CHECK(eng.hamiltonian_at(0.5, all, zeros).norm() == 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.1, 2.6);
  for (int i = 0; i < 10; ++i) {
    MatrixXc h = eng.hamiltonian_at(u(rng), all);
    CHECK((h - h.adjoint()).norm() < 1e-12);
  }
}

TEST_CASE("scattering: identity cases, unitarity, verified step") {
  Scenario s = tiny_two_detector();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  MatrixXc id = MatrixXc::Identity(36, 36);
  CHECK((eng.scattering({}, 0.01) - id).norm() == 0.0);  // empty subset
  MatrixXc u = eng.scattering(eng.all_labels(), 0.01);
  CHECK(operator_norm(u.adjoint() * u - id) < 1e-8);
  CHECK_NOTHROW(eng.scattering_verified(eng.all_labels(), 0.01, 1e-4));
  CHECK_THROWS_AS(eng.scattering_verified(eng.all_labels(), 0.4, 1e-12), StepTooCoarse);
}

TEST_CASE("midpoint integrator has fitted order 2") {
  Scenario s = cdl_test::respond_scenario();
  s.oracle.modes = {-1, 0, 1};
  s.oracle.fock_cutoff = 4;
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  std::vector<double> lam = {0.3};  // strong enough that step error dominates roundoff
  auto p_at = [&](double dt) {
    return eng.run_excitation(DetectorLabel::A, lam, std::nullopt, dt);
  };
  const double p1 = p_at(0.08), p2 = p_at(0.04), p3 = p_at(0.02);
  const double order = std::log2(std::abs(p1 - p2) / std::abs(p2 - p3));
  CHECK(order > 1.8);
  CHECK(order < 2.2);
}

TEST_CASE("state and unitary propagation agree") {
  Scenario s = tiny_two_detector();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  VectorXc psi0 = eng.initial_pure_state();
  MatrixXc u = eng.scattering(eng.all_labels(), 0.01);
  VectorXc via_u = u * psi0;
  VectorXc via_krylov = eng.evolve_state(psi0, s.t0, s.t1, 0.01, eng.all_labels());
  CHECK((via_u - via_krylov).norm() < 1e-9);
}

TEST_CASE("weyl_kick: identity, inverse, leak detection, mean field") {
  Scenario s = cdl_test::sorkin_scenario();
  s.oracle.fock_cutoff = 5;
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  Kick k = *s.kick;
  k.lambda_f = 0.0;
  MatrixXc id = MatrixXc::Identity(eng.space().dim(), eng.space().dim());
  CHECK((eng.weyl_kick(k) - id).norm() < 1e-12);
  k.lambda_f = 0.6;
  MatrixXc up = eng.weyl_kick(k);
  k.lambda_f = -0.6;
  MatrixXc dn = eng.weyl_kick(k);
  CHECK(operator_norm(dn * up - id) < 1e-8);
  k.lambda_f = 40.0;  // deliberately blows the cutoff
  CHECK_THROWS_AS(eng.weyl_kick(k), TruncationLeak);

  // mean field of the kicked vacuum vs the field module's closed form,
  // restricted to the retained modes
  k.lambda_f = 0.6;
  VectorXc psi = eng.initial_pure_state(0.6);
  GaussianFieldState full = GaussianFieldState::kicked_vacuum(*s.kick, s.field);
  for (std::size_t i = 0; i < full.alpha.size(); ++i) {
    const int n = static_cast<int>(i) - s.field.N;
    bool retained = std::find(eng.space().modes.begin(), eng.space().modes.end(), n) !=
                    eng.space().modes.end();
    if (!retained) full.alpha[i] = 0.0;
  }
  for (const Event& e : {Event{0.9, -1.6}, Event{0.3, -2.5}}) {
    const double expect = 0.6 / s.kick->lambda_f * mean_field(full, e, s.field);
    CHECK(eng.mean_field_at(psi, e) == doctest::Approx(expect).epsilon(5e-3));
  }
}

TEST_CASE("reduced states: product factor and maximally mixed") {
  Scenario s = tiny_two_detector();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  VectorXc psi = eng.initial_pure_state();
  Matrix2c ra = eng.reduced_detector_state(DetectorLabel::A, psi);
  CHECK((ra - plus_state()).norm() < 1e-12);
  Matrix2c rb = eng.reduced_detector_state(DetectorLabel::B, psi);
  CHECK((rb - ground_state()).norm() < 1e-12);
  const int dim = eng.space().dim();
  MatrixXc mixed = MatrixXc::Identity(dim, dim) / double(dim);
  Matrix2c rm = eng.reduced_detector_state(DetectorLabel::A, mixed);
  CHECK((rm - 0.5 * Matrix2c::Identity()).norm() < 1e-12);
}

TEST_CASE("nonselective_measure: diagonal invariance and idempotence") {
  Scenario s = tiny_two_detector();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  const int dim = eng.space().dim();
  // a state diagonal in the measured (z) basis is unchanged
  VectorXc diag = VectorXc::LinSpaced(dim, 1.0, 2.0);
  MatrixXc rho = (diag.asDiagonal().toDenseMatrix()) / diag.sum();
  Matrix2c zbasis = Matrix2c::Identity();
  MatrixXc meas = eng.nonselective_measure(DetectorLabel::A, zbasis, rho);
  CHECK((meas - rho).norm() < 1e-14);
  // idempotence in an arbitrary basis, trace preserved
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXc m = MatrixXc::NullaryExpr(dim, dim, [&](Eigen::Index, Eigen::Index) {
    return cplx(g(rng), g(rng));
  });
  rho = m * m.adjoint();
  rho /= rho.trace().real();
  Matrix2c xbasis;
  xbasis << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 1 / std::sqrt(2.0), -1 / std::sqrt(2.0);
  MatrixXc once = eng.nonselective_measure(DetectorLabel::B, xbasis, rho);
  MatrixXc twice = eng.nonselective_measure(DetectorLabel::B, xbasis, once);
  CHECK((once - twice).norm() < 1e-12);
  CHECK(once.trace().real() == doctest::Approx(1.0).epsilon(1e-12));
  // branch decomposition realizes the same map on pure states
  VectorXc psi = eng.initial_pure_state();
  auto branches = eng.measurement_branches(DetectorLabel::A, xbasis, psi);
  MatrixXc from_branches = MatrixXc::Zero(dim, dim);
  for (const auto& b : branches) from_branches += b * b.adjoint();
  MatrixXc direct = eng.nonselective_measure(DetectorLabel::A, xbasis,
                                             MatrixXc(psi * psi.adjoint()));
  CHECK((from_branches - direct).norm() < 1e-12);
}

TEST_CASE("factorization_residual: time-disjoint pairs factorize exactly") {
  Scenario s = cdl_test::nosignal_scenario(true);  // A before B, spacelike
  s.oracle.modes = {-1, 0, 1};
  s.oracle.fock_cutoff = 3;
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  CHECK(eng.factorization_residual(DetectorLabel::A, DetectorLabel::B, 0.01) < 1e-10);
  // timelike but still time-disjoint: also exact by step factorization
  Scenario st = cdl_test::nosignal_scenario(false);
  st.oracle.modes = {-1, 0, 1};
  st.oracle.fock_cutoff = 3;
  ExactEngine engt(st, SpaceInfo::from_scenario(st));
  CHECK(engt.factorization_residual(DetectorLabel::A, DetectorLabel::B, 0.01) < 1e-10);
}

TEST_CASE("factorization_residual: overlapping switchings do not factorize") {
  Scenario s;
  s.field = FieldSpec{20.0, 1.0, 64};
  s.detectors = {det(DetectorLabel::A, 1.0, 0.1, 0.5, 0.5, -0.4, 0.35, ground_state()),
                 det(DetectorLabel::B, 1.0, 0.1, 0.8, 0.5, 0.8, 0.35, ground_state())};
  s.t0 = -0.1;
  s.t1 = 1.4;
  s.oracle.modes = {-1, 0, 1};
  s.oracle.fock_cutoff = 4;
  CHECK(classify_causal(s.detectors[0].smearing.support(), s.detectors[1].smearing.support()) ==
        CausalRelation::NotOrderable);
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  CHECK(eng.factorization_residual(DetectorLabel::A, DetectorLabel::B, 0.005) > 1e-6);
}

TEST_CASE("sorkin_probe and order_probe_K check their geometry preconditions") {
  Scenario bad = cdl_test::sorkin_scenario();
  bad.kick->f = SpacetimeFunction::separable_bump(-0.25, 0.25, 1.2, 0.4);  // causally tied to B
  ExactEngine eng(bad, SpaceInfo::from_scenario(bad));
  std::vector<double> grid{0.5};
  CHECK_THROWS_AS(sorkin_probe(bad, grid, eng), GeometryViolation);

  Scenario k = cdl_test::korder_scenario();
  k.detectors[2].smearing.x_center = 1.5;  // C causally tied to B
  k.t1 = 2.65;
  ExactEngine engk(k, SpaceInfo::from_scenario(k));
  CHECK_THROWS_AS(order_probe_K(k, engk), GeometryViolation);
}

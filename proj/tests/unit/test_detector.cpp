#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cdl/detector.hpp"
#include "cdl/errors.hpp"

using namespace cdl;

namespace {
DetectorSpec make_detector(double xw = 0.5) {
  DetectorSpec d;
  d.label = DetectorLabel::A;
  d.gap = 1.0;
  d.coupling = 0.05;
  d.smearing = SmearingProfile{0.5, 0.5, 0.0, xw, false};
  return d;
}
const FieldSpec kField{20.0, 1.0, 64};
}  // namespace

TEST_CASE("monopole algebra") {
  Matrix2c m0 = monopole(0.0, 1.0);
  CHECK(std::abs(m0(0, 1) - cplx(1, 0)) < 1e-15);
  CHECK(std::abs(m0(1, 0) - cplx(1, 0)) < 1e-15);
  CHECK(std::abs(m0(0, 0)) == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 25; ++i) {
    Matrix2c m = monopole(u(rng), 2.3);
    CHECK((m - m.adjoint()).norm() < 1e-15);
    CHECK((m * m - Matrix2c::Identity()).norm() < 1e-15);  // involutory
    Eigen::SelfAdjointEigenSolver<Matrix2c> es(m);
    CHECK(es.eigenvalues()(0) == doctest::Approx(-1.0));
    CHECK(es.eigenvalues()(1) == doctest::Approx(1.0));
  }
  CHECK((monopole(123.4, 0.0) - monopole(0.0, 1.0)).norm() < 1e-15);  // gap 0 is sigma_x
}

TEST_CASE("interaction_weight: support, center, zero coupling") {
  DetectorSpec d = make_detector();
  CHECK(interaction_weight(d, Event{0.5, 2.0}).scalar == 0.0);
  CHECK(interaction_weight(d, Event{-0.2, 0.0}).scalar == 0.0);
  // at the smearing center the scalar is lambda * Lambda_max
  const double lam_max = d.smearing.value(0.5, 0.0);
  CHECK(interaction_weight(d, Event{0.5, 0.0}).scalar == doctest::Approx(0.05 * lam_max));
  DetectorSpec off = d;
  off.coupling = 0.0;
  CHECK(interaction_weight(off, Event{0.5, 0.0}).scalar == 0.0);
  // weights are exactly separable chi(t) F(x)
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ut(0.0, 1.0), ux(-0.5, 0.5);
  for (int i = 0; i < 40; ++i) {
    const double t = ut(rng), x = ux(rng);
    CHECK(interaction_weight(d, Event{t, x}).scalar ==
          doctest::Approx(0.05 * d.smearing.chi(t) * d.smearing.F(x)).epsilon(1e-14));
  }
  // support bbox contains every sampled point with nonzero weight
  Region sup = d.smearing.support();
  for (int i = 0; i < 40; ++i) {
    const double t = ut(rng) * 3 - 1, x = ux(rng) * 6;
    if (interaction_weight(d, Event{t, x}).scalar != 0.0) {
      CHECK(t >= sup.t_min);
      CHECK(t <= sup.t_max);
      CHECK(x >= sup.x_min);
      CHECK(x <= sup.x_max);
    }
  }
}

TEST_CASE("detector_form_factor: pointlike phases and even-profile symmetry") {
  DetectorSpec d = make_detector();
  d.smearing.x_center = 1.5;
  DetectorSpec p = pointlike_limit(d);
  DetectorFormFactor fp = detector_form_factor(p, kField);
  for (int n : {-5, -1, 0, 3, 17}) {
    // pointlike: f_n = u_n(0, x_center), a pure phase over the mode norm
    cplx expect = mode_function(n, Event{0.0, 1.5}, kField);
    CHECK(std::abs(fp.at(n) - expect) < 1e-14);
  }
  // even profile about x_center: phases carry only the center offset
  DetectorFormFactor fs = detector_form_factor(d, kField);
  for (int n : {-8, -2, 1, 6}) {
    cplx stripped = fs.at(n) * std::polar(1.0, -kField.k(n) * d.smearing.x_center);
    CHECK(std::abs(stripped.imag()) < 1e-13);
  }
}

TEST_CASE("pointlike_limit: idempotence, degenerate support, width-scan convergence") {
  DetectorSpec d = make_detector();
  DetectorSpec p = pointlike_limit(d);
  CHECK(p.smearing.pointlike_spatial);
  DetectorSpec pp = pointlike_limit(p);
  CHECK(pp.smearing.pointlike_spatial);
  CHECK(pp.smearing.t_width == d.smearing.t_width);  // switching unchanged
  Region sup = p.smearing.support();
  CHECK(sup.x_min == sup.x_max);
  CHECK(sup.t_min == d.smearing.support().t_min);

  // form factor of the limit = limit of form factors (within 1% at width 1e-3)
  DetectorFormFactor flim = detector_form_factor(p, kField);
  DetectorSpec narrow = d;
  narrow.smearing.x_width = 1e-3;
  DetectorFormFactor fnarrow = detector_form_factor(narrow, kField);
  for (int n : {-64, -20, 0, 20, 64}) {
    CHECK(std::abs(fnarrow.at(n) - flim.at(n)) < 0.01 * std::abs(flim.at(n)));
  }
}

TEST_CASE("detector validation") {
  DetectorSpec d = make_detector();
  CHECK_NOTHROW(d.validate());
  d.initial_state(0, 0) = 2.0;
  CHECK_THROWS(d.validate());
  DetectorSpec far = make_detector();
  far.smearing.x_center = 9.9;
  CHECK_THROWS_AS(detector_form_factor(far, kField), SupportOutsideDomain);
}

TEST_CASE("custom current callback is used") {
  DetectorSpec d = make_detector();
  d.current = [](double) { return Matrix2c::Identity(); };
  CHECK((interaction_weight(d, Event{0.5, 0.0}).current - Matrix2c::Identity()).norm() < 1e-15);
}

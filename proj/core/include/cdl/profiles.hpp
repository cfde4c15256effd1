#pragma once
#include <functional>

#include "cdl/geometry.hpp"

namespace cdl {

/// Peak-normalized compact bump: exp(1 - 1/(1-u^2)) for |u| < 1, else 0.
double bump(double u);

/// Integral of bump over [-1, 1].
double bump_mass();

/// Separable compact spacetime smearing Lambda(t,x) = chi(t) F(x).
/// chi is the peak-normalized bump on [t_center +- t_width].
/// F is the unit-integral bump on [x_center +- x_width]; with pointlike_spatial
/// the spatial integral degenerates to evaluation at x_center.
struct SmearingProfile {
  double t_center = 0.0;
  double t_width = 0.5;
  double x_center = 0.0;
  double x_width = 0.5;
  bool pointlike_spatial = false;

  double chi(double t) const;
  double F(double x) const;           // undefined (throws) when pointlike
  double value(double t, double x) const;  // chi * F, 0 outside support
  Region support() const;
  bool valid() const { return t_width > 0.0 && (pointlike_spatial || x_width > 0.0); }
};

/// Callable spacetime profile with a declared compact support.
struct SpacetimeFunction {
  std::function<double(double, double)> f;  // (t, x)
  Region support;

  double operator()(double t, double x) const { return f(t, x); }

  /// Separable unit-mass bump in both axes (used for Weyl-kick profiles).
  static SpacetimeFunction separable_bump(double t_center, double t_width, double x_center,
                                          double x_width);
};

/// Weyl-kick data: unitary exp(i lambda_f phi(f)).
struct Kick {
  SpacetimeFunction f;
  double lambda_f = 0.0;
};

}  // namespace cdl

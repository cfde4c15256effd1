#include "cdl/profiles.hpp"

#include <cmath>
#include <stdexcept>

#include "cdl/quadrature.hpp"

namespace cdl {

double bump(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

double bump_mass() {
  static const double mass = gauss_integrate([](double u) { return bump(u); }, -1.0, 1.0, 200);
  return mass;
}

double SmearingProfile::chi(double t) const { return bump((t - t_center) / t_width); }

double SmearingProfile::F(double x) const {
  if (pointlike_spatial)
    throw std::logic_error("SmearingProfile::F: pointlike profile has no density");
  return bump((x - x_center) / x_width) / (x_width * bump_mass());
}

double SmearingProfile::value(double t, double x) const { return chi(t) * F(x); }

Region SmearingProfile::support() const {
  const double xw = pointlike_spatial ? 0.0 : x_width;
  return Region{t_center - t_width, t_center + t_width, x_center - xw, x_center + xw};
}

SpacetimeFunction SpacetimeFunction::separable_bump(double t_center, double t_width,
                                                    double x_center, double x_width) {
  const double mass = bump_mass();
  SpacetimeFunction g;
  g.f = [=](double t, double x) {
    return bump((t - t_center) / t_width) / (t_width * mass) *
           bump((x - x_center) / x_width) / (x_width * mass);
  };
  g.support = Region{t_center - t_width, t_center + t_width, x_center - x_width, x_center + x_width};
  return g;
}

}  // namespace cdl

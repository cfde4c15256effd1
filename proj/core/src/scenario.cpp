#include "cdl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "cdl/errors.hpp"

namespace cdl {

const DetectorSpec* Scenario::find(DetectorLabel l) const {
  for (const auto& d : detectors)
    if (d.label == l) return &d;
  return nullptr;
}

const DetectorSpec& Scenario::require(DetectorLabel l) const {
  const DetectorSpec* d = find(l);
  if (!d)
    throw GeometryViolation(std::string("scenario is missing detector ") + to_string(l));
  return *d;
}

void Scenario::validate() const {
  field.validate();
  if (!(t0 < t1)) throw SchemaError("window: t0 must be < t1");
  if (grid.n_t < 16) throw SchemaError("grid.n_t: too few time grid points");
  if (grid.quad_order < 4) throw SchemaError("grid.quad_order: too low");
  if (oracle.fock_cutoff < 2) throw SchemaError("oracle.fock_cutoff: must be >= 2");
  if (!(oracle.dt > 0.0)) throw SchemaError("oracle.dt: must be > 0");

  std::set<DetectorLabel> seen;
  double xmin = 0.0, xmax = 0.0;
  bool any = false;
  auto fold_support = [&](const Region& s, const std::string& what) {
    if (s.t_min < t0 || s.t_max > t1)
      throw SchemaError(what + ": support " + s.str() + " exits the window [" +
                        std::to_string(t0) + "," + std::to_string(t1) + "]");
    if (s.x_min < -field.L / 2 || s.x_max > field.L / 2)
      throw SupportOutsideDomain(what + ": support " + s.str() + " exits the cavity");
    if (!any) {
      xmin = s.x_min;
      xmax = s.x_max;
      any = true;
    } else {
      xmin = std::min(xmin, s.x_min);
      xmax = std::max(xmax, s.x_max);
    }
  };
  for (const auto& d : detectors) {
    d.validate();
    if (!seen.insert(d.label).second)
      throw SchemaError(std::string("duplicate detector label ") + to_string(d.label));
    fold_support(d.smearing.support(), std::string("detector ") + to_string(d.label));
  }
  if (kick) fold_support(kick->f.support, "kick");

  // Wrap-around validator: no signal may cross the cavity seam within the window.
  if (any) {
    const double duration = t1 - t0;
    const double extent = xmax - xmin;
    if (!(duration < (field.L - extent) / 2.0))
      throw SchemaError("window: duration " + std::to_string(duration) +
                        " violates the wrap-around bound (L - extent)/2 = " +
                        std::to_string((field.L - extent) / 2.0));
  }
}

std::vector<int> Scenario::retained_modes() const {
  if (!oracle.modes.empty()) {
    std::vector<int> m = oracle.modes;
    std::sort(m.begin(), m.end());
    for (int n : m)
      if (n < -field.N || n > field.N)
        throw SchemaError("oracle.modes: index " + std::to_string(n) + " beyond cutoff");
    return m;
  }
  // Score each mode by its summed coupling magnitude over detectors and kick.
  std::vector<double> score(static_cast<std::size_t>(field.n_modes()), 0.0);
  for (const auto& d : detectors) {
    DetectorFormFactor ff = detector_form_factor(d, field, grid.quad_order);
    for (std::size_t i = 0; i < score.size(); ++i) score[i] += std::abs(ff.f[i]);
  }
  if (kick) {
    ModeFormFactor c = smeared_mode_coeffs(kick->f, field, grid.quad_order, -1.0);
    for (std::size_t i = 0; i < score.size(); ++i) score[i] += std::abs(c.c[i]);
  }
  std::vector<int> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] > score[b]; });
  const int count = std::min<int>(oracle.mode_count, field.n_modes());
  std::vector<int> m;
  for (int i = 0; i < count; ++i) m.push_back(idx[static_cast<std::size_t>(i)] - field.N);
  std::sort(m.begin(), m.end());
  return m;
}

}  // namespace cdl

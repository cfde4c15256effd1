#pragma once
#include <cstddef>
#include <vector>

namespace cdl {

/// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes/weights for the given order (cached; thread-safe after first use per order).
const GaussRule& gauss_legendre(int order);

/// Rule mapped to [a, b].
GaussRule gauss_on(double a, double b, int order);

/// Integrate f over [a, b] with an order-point rule.
template <typename F>
double gauss_integrate(F&& f, double a, double b, int order) {
  GaussRule r = gauss_on(a, b, order);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) acc += r.weights[i] * f(r.nodes[i]);
  return acc;
}

}  // namespace cdl

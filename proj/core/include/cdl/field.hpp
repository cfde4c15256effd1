#pragma once
#include <complex>
#include <span>
#include <vector>

#include "cdl/geometry.hpp"
#include "cdl/profiles.hpp"

namespace cdl {

using cplx = std::complex<double>;

// Mode conventions
// ----------------
// Periodic cavity x in [-L/2, L/2], modes n in {-N..N}:
//   k_n = 2 pi n / L,  w_n = sqrt(k_n^2 + m^2),
//   u_n(t,x) = exp(-i(w_n t - k_n x)) / sqrt(2 w_n L),
//   phi(t,x) = sum_n [ a_n u_n(t,x) + a_n^dag u_n(t,x)^* ].
// Commutator c-number (real):
//   PJ(x,y) := -i [phi(x), phi(y)] = -(1/L) sum_n sin(w_n dt - k_n dx) / w_n,
// and Im W(x,y) = PJ(x,y)/2 in every Gaussian state.

/// Mode-truncated real Klein-Gordon field in a periodic cavity.
struct FieldSpec {
  double L = 20.0;  ///< cavity length
  double m = 1.0;   ///< field mass, strictly positive
  int N = 64;       ///< mode cutoff, modes n in {-N..N}

  int n_modes() const { return 2 * N + 1; }
  double k(int n) const;
  double omega(int n) const;
  Region domain(double t0, double t1) const { return Region{t0, t1, -L / 2, L / 2}; }
  void validate() const;  // throws std::invalid_argument
};

/// Expansion of a smeared operator phi(g) over modes.
/// Stores the creation-side coefficients c_n = Int dt dx g(t,x) u_n(t,x)^*,
/// so that phi(g) = sum_n [ c_n^* a_n + c_n a_n^dag ] for real g.
struct ModeFormFactor {
  int N = 0;
  std::vector<cplx> c;  // index n + N

  cplx at(int n) const { return c[static_cast<std::size_t>(n + N)]; }
};

/// Vacuum, per-mode coherent, or per-mode thermal Gaussian field state.
struct GaussianFieldState {
  enum class Kind { Vacuum, Coherent, Thermal };
  Kind kind = Kind::Vacuum;
  std::vector<cplx> alpha;   // Coherent: amplitude per mode, index n + N
  std::vector<double> nbar;  // Thermal: occupation per mode, index n + N

  static GaussianFieldState vacuum();
  static GaussianFieldState coherent(std::vector<cplx> alpha_by_mode);
  static GaussianFieldState thermal(std::vector<double> nbar_by_mode);
  /// Coherent state produced by the Weyl kick: alpha_n = i lambda_f c_n(f).
  static GaussianFieldState kicked_vacuum(const Kick& kick, const FieldSpec& spec,
                                          int quad_order = 48);
  void validate(const FieldSpec& spec) const;
};

/// PJ(x,y) = -i[phi(x), phi(y)], truncated mode sum. Antisymmetric, zero at equal times.
double pauli_jordan(const Event& x, const Event& y, const FieldSpec& spec);

/// Same sum restricted to a mode subset (oracle comparisons).
double pauli_jordan_modes(const Event& x, const Event& y, const FieldSpec& spec,
                          std::span<const int> modes);

/// <phi(x) phi(y)> in the given Gaussian state.
cplx wightman(const Event& x, const Event& y, const GaussianFieldState& state,
              const FieldSpec& spec);

/// c_n = Int g u_n^* by tensor Gauss-Legendre over supp(g), with a 4x-refinement
/// self-check at tolerance rel_tol (QuadratureNotConverged on failure, unless
/// rel_tol <= 0 which skips the check). Throws SupportOutsideDomain if supp(g)
/// leaves the cavity.
ModeFormFactor smeared_mode_coeffs(const SpacetimeFunction& g, const FieldSpec& spec,
                                   int quad_order = 48, double rel_tol = 1e-9);

/// One-point function <phi(e)> in the kicked vacuum exp(i lambda_f phi(f)) |0>.
/// Equals -lambda_f Int dy f(y) PJ(e, y); linear in lambda_f by construction.
double classical_field(const Kick& kick, const Event& e, const FieldSpec& spec,
                       int quad_order = 48);

/// Mean field of a Gaussian state: 2 Re sum_n alpha_n u_n(e) (0 unless Coherent).
double mean_field(const GaussianFieldState& state, const Event& e, const FieldSpec& spec);

/// Double integral of PJ against g1, g2:  -i [phi(g1), phi(g2)] = 2 sum_n Im(c1_n^* c2_n).
double smeared_commutator(const SpacetimeFunction& g1, const SpacetimeFunction& g2,
                          const FieldSpec& spec, int quad_order = 48);

/// Same from precomputed coefficient tables.
double smeared_commutator(const ModeFormFactor& c1, const ModeFormFactor& c2);

/// Positive-frequency mode function u_n(t,x).
cplx mode_function(int n, const Event& e, const FieldSpec& spec);

}  // namespace cdl

#pragma once
#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "cdl/scenario.hpp"

namespace cdl {

using MatrixXc = Eigen::MatrixXcd;
using VectorXc = Eigen::VectorXcd;

/// Truncated joint space: qubits (x) retained field modes.
/// Basis ordering: detectors first, modes in ascending index. The flattened
/// index is q * fdim + f, where q's most significant bit is qubits[0]
/// (bit value 1 = excited) and f's most significant digit is modes[0]'s
/// occupation in base fock_cutoff.
struct SpaceInfo {
  std::vector<DetectorLabel> qubits;
  std::vector<int> modes;  ///< ascending
  int fock_cutoff = 4;

  int qcount() const { return static_cast<int>(qubits.size()); }
  int mcount() const { return static_cast<int>(modes.size()); }
  int qdim() const { return 1 << qcount(); }
  int fdim() const;
  int dim() const { return qdim() * fdim(); }
  int qubit_index(DetectorLabel l) const;  // throws GeometryViolation if absent

  static SpaceInfo from_scenario(const Scenario& scen);
  void validate() const;  // q <= 3, M <= 4, dim <= 4096
};

/// Dense density matrix over a SpaceInfo.
struct ExactState {
  MatrixXc rho;
  void validate(double trace_tol = 1e-10, double psd_floor = -1e-10) const;
};

/// Largest singular value.
double operator_norm(const MatrixXc& m);
/// Half the trace norm of the Hermitian difference.
double trace_distance(const MatrixXc& a, const MatrixXc& b);

/// Exact unitary evolution of the truncated joint system under the full
/// time-dependent Hamiltonian, by midpoint exponential steps.
class ExactEngine {
 public:
  ExactEngine(const Scenario& scen, SpaceInfo info);

  const SpaceInfo& space() const { return info_; }
  const Scenario& scenario() const { return scen_; }
  std::vector<DetectorLabel> all_labels() const;

  /// Sum over active detectors of lambda chi(t) mu(t) (x) phi_d(t), dense.
  /// The subset is literal: an empty subset means no interaction (H = 0,
  /// scattering = identity). Couplings may be overridden.
  MatrixXc hamiltonian_at(double t, std::span<const DetectorLabel> active = {},
                          std::span<const double> couplings = {}) const;

  /// Ordered product of exp(-i H(t_mid) dt) over the scenario window.
  MatrixXc scattering(std::span<const DetectorLabel> subset, double dt) const;
  MatrixXc scattering_window(std::span<const DetectorLabel> subset, double t0, double t1,
                             double dt) const;
  /// Runs dt and dt/2; throws StepTooCoarse if they differ by more than tol
  /// in operator norm. Returns the dt/2 product.
  MatrixXc scattering_verified(std::span<const DetectorLabel> subset, double dt,
                               double tol) const;

  /// exp(i lambda_f phi(f)) restricted to the retained modes, as a unitary on
  /// the full space. Throws TruncationLeak if the kicked vacuum populates any
  /// mode's top Fock level above leak_tol.
  MatrixXc weyl_kick(const Kick& kick, double leak_tol = 1e-4) const;

  /// || S_{A+B} - S_B S_A || with the product ordered by classify_causal
  /// (first-interacting detector applied first; NotOrderable falls back to
  /// switching midpoint order).
  double factorization_residual(DetectorLabel a, DetectorLabel b, double dt) const;

  /// Product state (x)_d initial qubit states (x) vacuum, kicked when the
  /// scenario carries a kick (or lf_override is given). Requires pure initial
  /// detector states.
  VectorXc initial_pure_state(std::optional<double> lf_override = {}) const;

  /// Midpoint steps applied through an adaptively converged Krylov expansion.
  VectorXc evolve_state(VectorXc psi, double t0, double t1, double dt,
                        std::span<const DetectorLabel> active = {},
                        std::span<const double> couplings = {}) const;

  Matrix2c reduced_detector_state(DetectorLabel l, const MatrixXc& rho) const;
  Matrix2c reduced_detector_state(DetectorLabel l, const VectorXc& psi) const;

  /// Sum_a (P_a (x) 1) rho (P_a (x) 1), P_a projectors onto the columns of basis.
  MatrixXc nonselective_measure(DetectorLabel l, const Matrix2c& basis,
                                const MatrixXc& rho) const;
  /// Pure-state branches P_a psi (unnormalized); evolving each branch and
  /// summing their density matrices realizes the same map.
  std::vector<VectorXc> measurement_branches(DetectorLabel l, const Matrix2c& basis,
                                             const VectorXc& psi) const;

  double excitation_probability(DetectorLabel l, const VectorXc& psi) const;

  /// Full-window run: kicked initial state (lambda_f), optional coupling
  /// overrides, returns the target's excitation probability.
  double run_excitation(DetectorLabel target, std::span<const double> couplings,
                        std::optional<double> lambda_f, double dt) const;

  /// Mean field <phi(0, x)> of a state (diagnostics / kick cross-checks).
  double mean_field_at(const VectorXc& psi, const Event& e) const;

 private:
  Scenario scen_;
  SpaceInfo info_;
  std::vector<MatrixXc> a_ops_;                  // per retained mode, field space
  std::vector<std::vector<cplx>> mode_coeff_;    // [detector][retained mode] f_{d,n}
  std::vector<double> omega_;                    // per retained mode

  MatrixXc field_operator(int detector, double t) const;  // phi_d(t), field space
  bool any_active(double ta, double tb, std::span<const DetectorLabel> active) const;
  struct HamOp;
};

/// Table of (lambda_f, p_B) over a kick-strength grid, plus forward-difference
/// slopes against the lambda_f = 0 run.
struct SorkinProbeResult {
  std::vector<double> lambda_f;
  std::vector<double> p_b;
  double p_b0 = 0.0;
  std::vector<double> slope;  ///< (p_b - p_b0) / lambda_f
  double step_error = 0.0;    ///< Richardson estimate on the largest-slope entry
};

/// Fig. 2 probe: checks the geometry preconditions (kick spacelike from B,
/// A straddling J+(kick) and J-(B)), then evaluates p_B on the lambda_f grid.
SorkinProbeResult sorkin_probe(const Scenario& scen, std::span<const double> lf_grid,
                               const ExactEngine& eng);

/// One mixed finite-difference derivative estimate of p_B in coupling space.
struct DerivativeEstimate {
  std::string name;
  double value = 0.0;
  double richardson_error = 0.0;  ///< |value(h) - value(h/2)| / 3
  double step_h = 0.0;
};

struct KOrderResult {
  std::vector<DerivativeEstimate> second;     ///< all coupling pairs
  DerivativeEstimate trilinear;               ///< d^3 p_B / dA dB dC
  DerivativeEstimate quartic;                 ///< d^4 p_B / dA^2 dB dC
  double p_origin = 0.0;
};

/// Central finite differences of p_B at the origin of coupling space, using the
/// scenario couplings as base steps; every estimate carries a Richardson bar
/// from an h/2 pass. Preconditions: three detectors, C spacelike from B,
/// A straddling J+(C) and J-(B).
KOrderResult order_probe_K(const Scenario& scen, const ExactEngine& eng, double dt_scale = 1.0);

}  // namespace cdl

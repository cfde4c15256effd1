#pragma once
#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "cdl/scenario.hpp"

namespace cdl {

using MatrixXc = Eigen::MatrixXcd;

/// Dyson-series contributions to the reduced detector-sector state, keyed by
/// the coupling multi-index (one power count per retained detector, scenario
/// order). The reduced state is sum_entries lambda^multi * entry; the (0,..,0)
/// entry is the initial reduced state.
struct PerturbativeSeries {
  std::vector<DetectorLabel> detectors;  ///< tensor order, first = most significant
  std::map<std::pair<int, int>, MatrixXc> entries;
  int n_t = 0;             ///< time-grid resolution used
  int modes_used = 0;      ///< size of the mode set used
  GaussianFieldState::Kind field_kind = GaussianFieldState::Kind::Vacuum;

  const MatrixXc& at(int n0, int n1 = 0) const;
  bool has(int n0, int n1 = 0) const;
};

/// Partial trace over one detector of a two-detector sector matrix.
Matrix2c trace_out_first(const MatrixXc& m);
Matrix2c trace_out_second(const MatrixXc& m);

struct AssembleResult {
  MatrixXc rho;
  double hermiticity_correction = 0.0;  ///< norm of the removed anti-Hermitian part
  double trace_correction = 0.0;        ///< |trace - 1| before renormalization
  bool within_validity = true;          ///< coupling heuristic |lambda| ||K||^(1/2) < 0.3
  double validity_margin = 0.0;         ///< max over detectors of that product
};

/// Polynomial evaluation of the series at given couplings (scenario order),
/// re-Hermitized and trace-renormalized. Out-of-validity is reported, not thrown.
AssembleResult assemble(const PerturbativeSeries& series, std::vector<double> couplings);

/// Time-ordered in-in engine: expands Tr_phi[ S rho S^dag ] order by order with
/// Wick contractions in the scenario's Gaussian field state (the kick enters
/// exactly, as the coherent mean around which the state is Gaussian).
class PerturbationEngine {
 public:
  struct Options {
    int max_total = 4;
    bool include_kick = true;        ///< use the scenario kick's coherent mean
    bool classical_terms_only = false;  ///< keep only contractions touching the mean
    std::vector<int> modes;          ///< mode subset; empty = all scenario modes
    int n_t = 0;                     ///< 0 = scenario grid.n_t
    std::optional<GaussianFieldState> field_state;  ///< default: kicked vacuum / vacuum
  };

  explicit PerturbationEngine(const Scenario& scen) : PerturbationEngine(scen, Options()) {}
  PerturbationEngine(const Scenario& scen, Options opt);

  /// One multi-index entry (detector powers in scenario order).
  MatrixXc entry(int n0, int n1 = 0) const;

  /// All entries with total order <= max_total.
  PerturbativeSeries series() const;

  int detector_count() const { return static_cast<int>(dets_.size()); }
  int n_t() const { return n_t_; }
  const Scenario& scenario() const { return scen_; }

 private:
  struct Prep;
  Scenario scen_;
  Options opt_;
  int n_t_;
  std::shared_ptr<const Prep> prep_;
  std::vector<DetectorSpec> dets_;
};

/// P_e = lambda^2 <e| entry(2) |e> for a ground-initialized detector in the
/// given field state; 2x time-grid refinement self-check at scen.tol.
double response_probability(const DetectorSpec& d, const GaussianFieldState& state,
                            const Scenario& scen);

/// Half trace norm of Tr_A[ entry(1,1) ], the lambda_A lambda_B coefficient of
/// the change of rho_B. Vanishes for spacelike supports up to the truncation
/// floor (and identically when <mu_A> = 0, e.g. ground-state A).
double signaling_coefficient(const DetectorSpec& a, const DetectorSpec& b, const Scenario& scen);
/// Same, restricted to a mode subset (oracle-matched comparisons).
double signaling_coefficient_modes(const DetectorSpec& a, const DetectorSpec& b,
                                   const Scenario& scen, std::vector<int> modes);
/// The coefficient matrix itself (change of rho_B per lambda_A lambda_B).
Matrix2c signaling_matrix(const DetectorSpec& a, const DetectorSpec& b, const Scenario& scen,
                          std::vector<int> modes = {});

/// Operator norm of the order-(1,1) kernel of S_{A+B} - S_B S_A, i.e. of
/// -Int_{t>s} [h_A(t), h_B(s)] (couplings stripped). Zero when B's switching
/// never runs ahead of A's inside the wedge.
double factorization_defect_leading(const DetectorSpec& a, const DetectorSpec& b,
                                    const Scenario& scen);

/// Forward-difference slope in lambda_f of the order-(2,2) entry's B-excitation,
/// i.e. [p_B^(2,2)(lambda_f) - p_B^(2,2)(0)] / lambda_f with couplings stripped.
/// Exactly linear in lambda_f at leading order. Checks the Fig. 2 geometry
/// preconditions (GeometryViolation) and the grid self-check (QuadratureNotConverged).
double sorkin_coefficient(const Scenario& scen, std::vector<int> modes = {});

/// lambda_A = 0 control at the same order in lambda_B: the kick-induced change
/// of p_B with A decoupled, per lambda_B^2 and lambda_f.
double sorkin_leak_coefficient(const Scenario& scen, std::vector<int> modes = {});

}  // namespace cdl

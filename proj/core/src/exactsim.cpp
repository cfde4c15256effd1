#include "cdl/exactsim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "cdl/errors.hpp"

namespace cdl {

namespace {
constexpr int kMaxDim = 4096;
constexpr int kMaxQubits = 3;
constexpr int kMaxModes = 4;
}  // namespace

int SpaceInfo::fdim() const {
  int d = 1;
  for (int j = 0; j < mcount(); ++j) d *= fock_cutoff;
  return d;
}

int SpaceInfo::qubit_index(DetectorLabel l) const {
  for (int i = 0; i < qcount(); ++i)
    if (qubits[static_cast<std::size_t>(i)] == l) return i;
  throw GeometryViolation(std::string("SpaceInfo: detector ") + to_string(l) + " not retained");
}

SpaceInfo SpaceInfo::from_scenario(const Scenario& scen) {
  SpaceInfo info;
  for (const auto& d : scen.detectors) info.qubits.push_back(d.label);
  info.modes = scen.retained_modes();
  info.fock_cutoff = scen.oracle.fock_cutoff;
  info.validate();
  return info;
}

void SpaceInfo::validate() const {
  if (qcount() < 1 || qcount() > kMaxQubits)
    throw std::invalid_argument("SpaceInfo: qubit count must be 1..3");
  if (mcount() < 1 || mcount() > kMaxModes)
    throw std::invalid_argument("SpaceInfo: retained mode count must be 1..4");
  if (fock_cutoff < 2) throw std::invalid_argument("SpaceInfo: fock cutoff must be >= 2");
  if (!std::is_sorted(modes.begin(), modes.end()) ||
      std::adjacent_find(modes.begin(), modes.end()) != modes.end())
    throw std::invalid_argument("SpaceInfo: modes must be strictly ascending");
  if (dim() > kMaxDim)
    throw std::invalid_argument("SpaceInfo: dimension " + std::to_string(dim()) +
                                " exceeds the hard cap " + std::to_string(kMaxDim));
}

void ExactState::validate(double trace_tol, double psd_floor) const {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("ExactState: not square");
  if ((rho - rho.adjoint()).norm() > 1e-10)
    throw std::invalid_argument("ExactState: not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > trace_tol || std::abs(rho.trace().imag()) > trace_tol)
    throw std::invalid_argument("ExactState: trace != 1");
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < psd_floor)
    throw std::invalid_argument("ExactState: negative eigenvalue below floor");
}

double operator_norm(const MatrixXc& m) {
  Eigen::BDCSVD<MatrixXc> svd(m);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

double trace_distance(const MatrixXc& a, const MatrixXc& b) {
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(a - b, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

ExactEngine::ExactEngine(const Scenario& scen, SpaceInfo info)
    : scen_(scen), info_(std::move(info)) {
  info_.validate();
  const int M = info_.mcount(), d = info_.fock_cutoff, fdim = info_.fdim();
  // Annihilation operator per retained mode slot, dense on the field factor.
  a_ops_.assign(static_cast<std::size_t>(M), MatrixXc::Zero(fdim, fdim));
  for (int j = 0; j < M; ++j) {
    int stride = 1;
    for (int l = j + 1; l < M; ++l) stride *= d;
    for (int f = 0; f < fdim; ++f) {
      const int occ = (f / stride) % d;
      if (occ > 0) a_ops_[static_cast<std::size_t>(j)](f - stride, f) = std::sqrt(double(occ));
    }
  }
  omega_.resize(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) omega_[static_cast<std::size_t>(j)] = scen_.field.omega(info_.modes[static_cast<std::size_t>(j)]);
  // Detector-mode couplings f_{d,n} restricted to the retained modes.
  for (const auto& det : scen_.detectors) {
    DetectorFormFactor ff = detector_form_factor(det, scen_.field, scen_.grid.quad_order);
    std::vector<cplx> row(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) row[static_cast<std::size_t>(j)] = ff.at(info_.modes[static_cast<std::size_t>(j)]);
    mode_coeff_.push_back(std::move(row));
  }
}

std::vector<DetectorLabel> ExactEngine::all_labels() const {
  std::vector<DetectorLabel> out;
  for (const auto& d : scen_.detectors) out.push_back(d.label);
  return out;
}

MatrixXc ExactEngine::field_operator(int detector, double t) const {
  const int fdim = info_.fdim();
  MatrixXc z = MatrixXc::Zero(fdim, fdim);
  for (int j = 0; j < info_.mcount(); ++j) {
    const cplx coef = mode_coeff_[static_cast<std::size_t>(detector)][static_cast<std::size_t>(j)] *
                      std::polar(1.0, -omega_[static_cast<std::size_t>(j)] * t);
    z += coef * a_ops_[static_cast<std::size_t>(j)];
  }
  return z + z.adjoint().eval();
}

namespace {
inline bool subset_has(std::span<const DetectorLabel> subset, DetectorLabel l) {
  return std::find(subset.begin(), subset.end(), l) != subset.end();
}
}  // namespace

bool ExactEngine::any_active(double ta, double tb, std::span<const DetectorLabel> active) const {
  for (const auto& det : scen_.detectors) {
    if (!subset_has(active, det.label)) continue;
    const double c0 = det.smearing.t_center - det.smearing.t_width;
    const double c1 = det.smearing.t_center + det.smearing.t_width;
    if (c0 < tb && ta < c1) return true;
  }
  return false;
}

MatrixXc ExactEngine::hamiltonian_at(double t, std::span<const DetectorLabel> active,
                                     std::span<const double> couplings) const {
  const int fdim = info_.fdim(), qdim = info_.qdim(), dim = info_.dim();
  MatrixXc h = MatrixXc::Zero(dim, dim);
  for (std::size_t di = 0; di < scen_.detectors.size(); ++di) {
    const DetectorSpec& det = scen_.detectors[di];
    if (!subset_has(active, det.label)) continue;
    const double lam = couplings.empty() ? det.coupling : couplings[di];
    const double c = lam * det.smearing.chi(t);
    if (c == 0.0) continue;
    const MatrixXc phi = field_operator(static_cast<int>(di), t);
    const Matrix2c mu = det.current_at(t);
    const int qi = info_.qubit_index(det.label);
    const int shift = info_.qcount() - 1 - qi;
    for (int qr = 0; qr < qdim; ++qr) {
      const int br = (qr >> shift) & 1;
      for (int bc = 0; bc < 2; ++bc) {
        const cplx w = c * mu(br, bc);
        if (w == cplx(0.0)) continue;
        const int qc = (qr & ~(1 << shift)) | (bc << shift);
        h.block(qr * fdim, qc * fdim, fdim, fdim) += w * phi;
      }
    }
  }
  return h;
}

MatrixXc ExactEngine::scattering_window(std::span<const DetectorLabel> subset, double t0,
                                        double t1, double dt) const {
  const int dim = info_.dim();
  MatrixXc u = MatrixXc::Identity(dim, dim);
  const int nsteps = std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt)));
  const double h = (t1 - t0) / nsteps;
  Eigen::SelfAdjointEigenSolver<MatrixXc> es;
  for (int s = 0; s < nsteps; ++s) {
    const double ta = t0 + s * h;
    if (!any_active(ta, ta + h, subset)) continue;
    es.compute(hamiltonian_at(ta + 0.5 * h, subset));
    const VectorXc phase =
        (cplx(0.0, -h) * es.eigenvalues().cast<cplx>().array()).exp().matrix();
    u = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint() * u;
  }
  return u;
}

MatrixXc ExactEngine::scattering(std::span<const DetectorLabel> subset, double dt) const {
  return scattering_window(subset, scen_.t0, scen_.t1, dt);
}

MatrixXc ExactEngine::scattering_verified(std::span<const DetectorLabel> subset, double dt,
                                          double tol) const {
  MatrixXc coarse = scattering(subset, dt);
  MatrixXc fine = scattering(subset, dt / 2);
  const double moved = operator_norm(coarse - fine);
  if (moved > tol)
    throw StepTooCoarse("scattering: halving dt moved S by " + std::to_string(moved) +
                        " (tol " + std::to_string(tol) + ")");
  return fine;
}

MatrixXc ExactEngine::weyl_kick(const Kick& kick, double leak_tol) const {
  const int fdim = info_.fdim(), d = info_.fock_cutoff, M = info_.mcount();
  ModeFormFactor c = smeared_mode_coeffs(kick.f, scen_.field, scen_.grid.quad_order, -1.0);
  MatrixXc phi = MatrixXc::Zero(fdim, fdim);
  for (int j = 0; j < M; ++j) {
    const cplx cj = c.at(info_.modes[static_cast<std::size_t>(j)]);
    phi += std::conj(cj) * a_ops_[static_cast<std::size_t>(j)];
    phi += cj * a_ops_[static_cast<std::size_t>(j)].adjoint();
  }
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(phi);
  const VectorXc phase =
      (cplx(0.0, kick.lambda_f) * es.eigenvalues().cast<cplx>().array()).exp().matrix();
  MatrixXc uf = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
  // Kicked vacuum must not pile population on any mode's top Fock level.
  VectorXc vac = VectorXc::Zero(fdim);
  vac(0) = 1.0;
  VectorXc kicked = uf * vac;
  for (int j = 0; j < M; ++j) {
    int stride = 1;
    for (int l = j + 1; l < M; ++l) stride *= d;
    double top = 0.0;
    for (int f = 0; f < fdim; ++f)
      if ((f / stride) % d == d - 1) top += std::norm(kicked(f));
    if (top > leak_tol)
      throw TruncationLeak("weyl_kick: top Fock level of mode " +
                           std::to_string(info_.modes[static_cast<std::size_t>(j)]) +
                           " holds " + std::to_string(top) + " > " + std::to_string(leak_tol));
  }
  MatrixXc u = MatrixXc::Zero(info_.dim(), info_.dim());
  for (int q = 0; q < info_.qdim(); ++q) u.block(q * fdim, q * fdim, fdim, fdim) = uf;
  return u;
}

double ExactEngine::factorization_residual(DetectorLabel a, DetectorLabel b, double dt) const {
  const DetectorSpec& da = scen_.require(a);
  const DetectorSpec& db = scen_.require(b);
  CausalRelation rel = classify_causal(da.smearing.support(), db.smearing.support());
  bool a_first;
  switch (rel) {
    case CausalRelation::PrecedesAB:
    case CausalRelation::OrderableAFirst:
    case CausalRelation::Spacelike:
      a_first = true;
      break;
    case CausalRelation::PrecedesBA:
    case CausalRelation::OrderableBFirst:
      a_first = false;
      break;
    case CausalRelation::NotOrderable:
    default:
      a_first = da.smearing.t_center <= db.smearing.t_center;
      break;
  }
  const DetectorLabel both_arr[2] = {a, b};
  const DetectorLabel a_arr[1] = {a}, b_arr[1] = {b};
  MatrixXc s_ab = scattering(std::span<const DetectorLabel>(both_arr, 2), dt);
  MatrixXc s_a = scattering(std::span<const DetectorLabel>(a_arr, 1), dt);
  MatrixXc s_b = scattering(std::span<const DetectorLabel>(b_arr, 1), dt);
  MatrixXc ordered = a_first ? MatrixXc(s_b * s_a) : MatrixXc(s_a * s_b);
  return operator_norm(s_ab - ordered);
}

VectorXc ExactEngine::initial_pure_state(std::optional<double> lf_override) const {
  // Qubit factor, qubits[0] most significant.
  VectorXc psi_q = VectorXc::Ones(1);
  for (const auto& det : scen_.detectors) {
    Eigen::SelfAdjointEigenSolver<Matrix2c> es(det.initial_state);
    if (es.eigenvalues().maxCoeff() < 1.0 - 1e-9)
      throw std::invalid_argument("initial_pure_state: detector " +
                                  std::string(to_string(det.label)) +
                                  " initial state is mixed; use the density path");
    Eigen::Vector2cd v = es.eigenvectors().col(es.eigenvalues()(0) > es.eigenvalues()(1) ? 0 : 1);
    VectorXc next(psi_q.size() * 2);
    for (Eigen::Index i = 0; i < psi_q.size(); ++i) {
      next(2 * i) = psi_q(i) * v(0);
      next(2 * i + 1) = psi_q(i) * v(1);
    }
    psi_q = next;
  }
  const int fdim = info_.fdim();
  VectorXc psi = VectorXc::Zero(info_.dim());
  double lf = lf_override.value_or(scen_.kick ? scen_.kick->lambda_f : 0.0);
  if (scen_.kick && lf != 0.0) {
    Kick k = *scen_.kick;
    k.lambda_f = lf;
    MatrixXc u = weyl_kick(k);
    VectorXc vac = VectorXc::Zero(info_.dim());
    for (Eigen::Index q = 0; q < psi_q.size(); ++q) vac(q * fdim) = psi_q(q);
    psi = u * vac;
  } else {
    for (Eigen::Index q = 0; q < psi_q.size(); ++q) psi(q * fdim) = psi_q(q);
  }
  return psi;
}

// Matrix-free application of H(t_mid): per active detector a small GEMM on the
// field index followed by a qubit-bit mix.
struct ExactEngine::HamOp {
  const ExactEngine* eng;
  std::vector<int> dets;        // detector indices active this step
  std::vector<double> scalars;  // lambda * chi(t_mid)
  std::vector<Matrix2c> mus;
  std::vector<MatrixXc> phis;   // field operators at t_mid
  mutable MatrixXc zbuf;

  void apply(const VectorXc& x, VectorXc& y) const {
    const int fdim = eng->info_.fdim(), qdim = eng->info_.qdim();
    y.setZero(x.size());
    using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> X(x.data(), qdim, fdim);
    Eigen::Map<RowMat> Y(y.data(), qdim, fdim);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      zbuf.noalias() = X * phis[i].transpose();
      const int qi = eng->info_.qubit_index(eng->scen_.detectors[static_cast<std::size_t>(dets[i])].label);
      const int shift = eng->info_.qcount() - 1 - qi;
      for (int qr = 0; qr < qdim; ++qr) {
        const int br = (qr >> shift) & 1;
        for (int bc = 0; bc < 2; ++bc) {
          const cplx w = scalars[i] * mus[i](br, bc);
          if (w == cplx(0.0)) continue;
          const int qc = (qr & ~(1 << shift)) | (bc << shift);
          Y.row(qr) += w * zbuf.row(qc);
        }
      }
    }
  }
};

namespace {

// y = exp(-i H dt) psi through a Lanczos expansion grown until the result is
// stationary at tol. Full reorthogonalization; deterministic.
template <typename Op>
VectorXc krylov_exp_apply(const Op& op, const VectorXc& psi, double dt, double tol = 1e-13,
                          int mmax = 48) {
  const double beta0 = psi.norm();
  if (beta0 == 0.0) return psi;
  const Eigen::Index n = psi.size();
  mmax = std::min<int>(mmax, static_cast<int>(n));
  MatrixXc V(n, mmax);
  V.col(0) = psi / beta0;
  std::vector<double> alpha, beta;
  VectorXc w(n), prev;
  int m = 0;
  VectorXc y_prev;
  for (int j = 0; j < mmax; ++j) {
    op.apply(V.col(j), w);
    cplx a = V.col(j).dot(w);
    w -= a * V.col(j);
    if (j > 0) w -= beta.back() * V.col(j - 1);
    // full reorthogonalization pass
    for (int k = 0; k <= j; ++k) w -= V.col(k).dot(w) * V.col(k);
    alpha.push_back(a.real());
    const double b = w.norm();
    m = j + 1;
    const bool breakdown = b < 1e-14;
    // evaluate exp on the current tridiagonal every iteration past 2
    if (breakdown || j >= 2 || j == mmax - 1) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      Eigen::VectorXcd expvec =
          (cplx(0.0, -dt) * es.eigenvalues().cast<cplx>().array()).exp().matrix();
      Eigen::VectorXcd small = es.eigenvectors().cast<cplx>() *
                               (expvec.array() * es.eigenvectors().row(0).transpose().cast<cplx>().array()).matrix();
      VectorXc y = beta0 * (V.leftCols(m) * small);
      if (breakdown || (y_prev.size() && (y - y_prev).norm() < tol * beta0) || j == mmax - 1)
        return y;
      y_prev = std::move(y);
    }
    if (breakdown) break;
    beta.push_back(b);
    if (j + 1 < mmax) V.col(j + 1) = w / b;
  }
  return y_prev;
}

}  // namespace

VectorXc ExactEngine::evolve_state(VectorXc psi, double t0, double t1, double dt,
                                   std::span<const DetectorLabel> active,
                                   std::span<const double> couplings) const {
  const int nsteps = std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt)));
  const double h = (t1 - t0) / nsteps;
  HamOp op;
  op.eng = this;
  op.zbuf.resize(info_.qdim(), info_.fdim());
  for (int s = 0; s < nsteps; ++s) {
    const double ta = t0 + s * h;
    if (!any_active(ta, ta + h, active)) continue;
    const double tm = ta + 0.5 * h;
    op.dets.clear();
    op.scalars.clear();
    op.mus.clear();
    op.phis.clear();
    for (std::size_t di = 0; di < scen_.detectors.size(); ++di) {
      const DetectorSpec& det = scen_.detectors[di];
      if (!subset_has(active, det.label)) continue;
      const double lam = couplings.empty() ? det.coupling : couplings[di];
      const double c = lam * det.smearing.chi(tm);
      if (c == 0.0) continue;
      op.dets.push_back(static_cast<int>(di));
      op.scalars.push_back(c);
      op.mus.push_back(det.current_at(tm));
      op.phis.push_back(field_operator(static_cast<int>(di), tm));
    }
    if (op.dets.empty()) continue;
    psi = krylov_exp_apply(op, psi, h);
  }
  return psi;
}

Matrix2c ExactEngine::reduced_detector_state(DetectorLabel l, const MatrixXc& rho) const {
  const int fdim = info_.fdim(), qdim = info_.qdim();
  const int shift = info_.qcount() - 1 - info_.qubit_index(l);
  Matrix2c out = Matrix2c::Zero();
  for (int qr = 0; qr < qdim; ++qr) {
    const int br = (qr >> shift) & 1;
    for (int bc = 0; bc < 2; ++bc) {
      const int qc = (qr & ~(1 << shift)) | (bc << shift);
      if ((qc >> shift & 1) != bc) continue;
      // trace over the field factor and the other qubits
      cplx acc = 0.0;
      for (int f = 0; f < fdim; ++f) acc += rho(qr * fdim + f, qc * fdim + f);
      out(br, bc) += acc;
    }
  }
  return out;
}

Matrix2c ExactEngine::reduced_detector_state(DetectorLabel l, const VectorXc& psi) const {
  const int fdim = info_.fdim(), qdim = info_.qdim();
  const int shift = info_.qcount() - 1 - info_.qubit_index(l);
  Matrix2c out = Matrix2c::Zero();
  for (int q0 = 0; q0 < qdim; ++q0) {
    if ((q0 >> shift) & 1) continue;  // enumerate bit = 0 rows, pair with bit = 1
    const int q1 = q0 | (1 << shift);
    for (int f = 0; f < fdim; ++f) {
      const cplx v0 = psi(q0 * fdim + f), v1 = psi(q1 * fdim + f);
      out(0, 0) += v0 * std::conj(v0);
      out(1, 1) += v1 * std::conj(v1);
      out(0, 1) += v0 * std::conj(v1);
    }
  }
  out(1, 0) = std::conj(out(0, 1));
  return out;
}

MatrixXc ExactEngine::nonselective_measure(DetectorLabel l, const Matrix2c& basis,
                                           const MatrixXc& rho) const {
  const int fdim = info_.fdim(), qdim = info_.qdim(), dim = info_.dim();
  const int shift = info_.qcount() - 1 - info_.qubit_index(l);
  MatrixXc out = MatrixXc::Zero(dim, dim);
  for (int a = 0; a < 2; ++a) {
    const Matrix2c p = basis.col(a) * basis.col(a).adjoint();
    MatrixXc e = MatrixXc::Zero(dim, dim);
    for (int qr = 0; qr < qdim; ++qr) {
      const int br = (qr >> shift) & 1;
      for (int bc = 0; bc < 2; ++bc) {
        const int qc = (qr & ~(1 << shift)) | (bc << shift);
        const cplx w = p(br, bc);
        if (w == cplx(0.0)) continue;
        for (int f = 0; f < fdim; ++f) e(qr * fdim + f, qc * fdim + f) = w;
      }
    }
    out += e * rho * e;
  }
  return out;
}

std::vector<VectorXc> ExactEngine::measurement_branches(DetectorLabel l, const Matrix2c& basis,
                                                        const VectorXc& psi) const {
  const int fdim = info_.fdim(), qdim = info_.qdim();
  const int shift = info_.qcount() - 1 - info_.qubit_index(l);
  std::vector<VectorXc> branches;
  for (int a = 0; a < 2; ++a) {
    const Matrix2c p = basis.col(a) * basis.col(a).adjoint();
    VectorXc out = VectorXc::Zero(psi.size());
    for (int qr = 0; qr < qdim; ++qr) {
      const int br = (qr >> shift) & 1;
      for (int bc = 0; bc < 2; ++bc) {
        const int qc = (qr & ~(1 << shift)) | (bc << shift);
        const cplx w = p(br, bc);
        if (w == cplx(0.0)) continue;
        out.segment(qr * fdim, fdim) += w * psi.segment(qc * fdim, fdim);
      }
    }
    branches.push_back(std::move(out));
  }
  return branches;
}

double ExactEngine::excitation_probability(DetectorLabel l, const VectorXc& psi) const {
  return reduced_detector_state(l, psi)(1, 1).real();
}

double ExactEngine::run_excitation(DetectorLabel target, std::span<const double> couplings,
                                   std::optional<double> lambda_f, double dt) const {
  VectorXc psi = initial_pure_state(lambda_f);
  psi = evolve_state(std::move(psi), scen_.t0, scen_.t1, dt, all_labels(), couplings);
  return excitation_probability(target, psi);
}

double ExactEngine::mean_field_at(const VectorXc& psi, const Event& e) const {
  const int fdim = info_.fdim(), qdim = info_.qdim();
  MatrixXc z = MatrixXc::Zero(fdim, fdim);
  for (int j = 0; j < info_.mcount(); ++j)
    z += mode_function(info_.modes[static_cast<std::size_t>(j)], e, scen_.field) *
         a_ops_[static_cast<std::size_t>(j)];
  MatrixXc phi = z + z.adjoint().eval();
  cplx acc = 0.0;
  for (int q = 0; q < qdim; ++q)
    acc += psi.segment(q * fdim, fdim).dot(phi * psi.segment(q * fdim, fdim));
  return acc.real();
}

SorkinProbeResult sorkin_probe(const Scenario& scen, std::span<const double> lf_grid,
                               const ExactEngine& eng) {
  if (!scen.kick) throw GeometryViolation("sorkin_probe: scenario has no kick");
  const Region rc = scen.kick->f.support;
  const Region rb = scen.require(DetectorLabel::B).smearing.support();
  const Region ra = scen.require(DetectorLabel::A).smearing.support();
  if (classify_causal(rc, rb) != CausalRelation::Spacelike)
    throw GeometryViolation("sorkin_probe: kick support must be spacelike from B");
  if (!future_intersects(rc, ra) || !past_intersects(rb, ra))
    throw GeometryViolation("sorkin_probe: A must straddle J+(kick) and J-(B)");

  std::vector<double> base;
  for (const auto& d : scen.detectors) base.push_back(d.coupling);
  const double dt = scen.oracle.dt;
  SorkinProbeResult out;
  out.p_b0 = eng.run_excitation(DetectorLabel::B, base, 0.0, dt);
  double max_slope = 0.0, max_lf = 0.0;
  for (double lf : lf_grid) {
    const double p = eng.run_excitation(DetectorLabel::B, base, lf, dt);
    out.lambda_f.push_back(lf);
    out.p_b.push_back(p);
    const double s = (p - out.p_b0) / lf;
    out.slope.push_back(s);
    if (std::abs(s) >= std::abs(max_slope)) {
      max_slope = s;
      max_lf = lf;
    }
  }
  if (!out.lambda_f.empty()) {
    const double p0h = eng.run_excitation(DetectorLabel::B, base, 0.0, dt / 2);
    const double ph = eng.run_excitation(DetectorLabel::B, base, max_lf, dt / 2);
    const double s_half = (ph - p0h) / max_lf;
    out.step_error = std::abs(s_half - max_slope) / 3.0;
  }
  return out;
}

KOrderResult order_probe_K(const Scenario& scen, const ExactEngine& eng, double dt_scale) {
  const Region rc = scen.require(DetectorLabel::C).smearing.support();
  const Region rb = scen.require(DetectorLabel::B).smearing.support();
  const Region ra = scen.require(DetectorLabel::A).smearing.support();
  if (classify_causal(rc, rb) != CausalRelation::Spacelike)
    throw GeometryViolation("order_probe_K: C must be spacelike from B");
  if (!future_intersects(rc, ra) || !past_intersects(rb, ra))
    throw GeometryViolation("order_probe_K: A must straddle J+(C) and J-(B)");
  if (scen.detectors.size() != 3)
    throw GeometryViolation("order_probe_K: exactly three detectors required");

  // Base steps h_d = scenario couplings; offsets counted in units of h/2.
  std::array<double, 3> h{};
  std::array<std::size_t, 3> at{};  // detector array positions of A, B, C
  for (std::size_t i = 0; i < 3; ++i) {
    DetectorLabel l = (i == 0) ? DetectorLabel::A : (i == 1 ? DetectorLabel::B : DetectorLabel::C);
    for (std::size_t j = 0; j < scen.detectors.size(); ++j)
      if (scen.detectors[j].label == l) at[i] = j;
    h[i] = scen.require(l).coupling;
    if (h[i] == 0.0) throw GeometryViolation("order_probe_K: couplings are the FD steps, must be nonzero");
  }
  const double dt = scen.oracle.dt * dt_scale;
  std::map<std::array<int, 3>, double> cache;
  auto eval = [&](int ia, int ib, int ic) {
    std::array<int, 3> key{ia, ib, ic};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<double> couplings(scen.detectors.size(), 0.0);
    couplings[at[0]] = 0.5 * ia * h[0];
    couplings[at[1]] = 0.5 * ib * h[1];
    couplings[at[2]] = 0.5 * ic * h[2];
    const double p = eng.run_excitation(DetectorLabel::B, couplings, std::nullopt, dt);
    cache.emplace(key, p);
    return p;
  };

  // scale = 2 evaluates the stencil at the full steps h, scale = 1 at h/2.
  auto pure2 = [&](int d, int scale) {
    std::array<int, 3> up{}, dn{};
    up[static_cast<std::size_t>(d)] = scale;
    dn[static_cast<std::size_t>(d)] = -scale;
    const double hh = 0.5 * scale * h[static_cast<std::size_t>(d)];
    return (eval(up[0], up[1], up[2]) - 2.0 * eval(0, 0, 0) + eval(dn[0], dn[1], dn[2])) /
           (hh * hh);
  };
  auto cross2 = [&](int d1, int d2, int scale) {
    double acc = 0.0;
    for (int s1 : {1, -1})
      for (int s2 : {1, -1}) {
        std::array<int, 3> o{};
        o[static_cast<std::size_t>(d1)] = s1 * scale;
        o[static_cast<std::size_t>(d2)] = s2 * scale;
        acc += s1 * s2 * eval(o[0], o[1], o[2]);
      }
    const double h1 = 0.5 * scale * h[static_cast<std::size_t>(d1)];
    const double h2 = 0.5 * scale * h[static_cast<std::size_t>(d2)];
    return acc / (4.0 * h1 * h2);
  };
  auto tri3 = [&](int scale) {
    double acc = 0.0;
    for (int sa : {1, -1})
      for (int sb : {1, -1})
        for (int sc : {1, -1}) acc += sa * sb * sc * eval(sa * scale, sb * scale, sc * scale);
    const double ha = 0.5 * scale * h[0], hb = 0.5 * scale * h[1], hc = 0.5 * scale * h[2];
    return acc / (8.0 * ha * hb * hc);
  };
  auto quartic = [&](int scale) {
    double acc = 0.0;
    const int wa[3] = {1, -2, 1};
    for (int ia = 0; ia < 3; ++ia)
      for (int sb : {1, -1})
        for (int sc : {1, -1})
          acc += wa[ia] * sb * sc * eval((ia - 1) * scale, sb * scale, sc * scale);
    const double ha = 0.5 * scale * h[0], hb = 0.5 * scale * h[1], hc = 0.5 * scale * h[2];
    return acc / (ha * ha * 4.0 * hb * hc);
  };

  auto estimate = [&](const std::string& name, auto&& fn, double step) {
    DerivativeEstimate e;
    e.name = name;
    const double coarse = fn(2), fine = fn(1);
    e.value = fine;
    e.richardson_error = std::abs(fine - coarse) / 3.0;
    e.step_h = step;
    return e;
  };

  KOrderResult out;
  out.p_origin = eval(0, 0, 0);
  const char* names[3] = {"A", "B", "C"};
  for (int d = 0; d < 3; ++d)
    out.second.push_back(estimate(std::string("d2/d") + names[d] + "2",
                                  [&](int s) { return pure2(d, s); }, h[static_cast<std::size_t>(d)]));
  for (int d1 = 0; d1 < 3; ++d1)
    for (int d2 = d1 + 1; d2 < 3; ++d2)
      out.second.push_back(estimate(std::string("d2/d") + names[d1] + "d" + names[d2],
                                    [&](int s) { return cross2(d1, d2, s); },
                                    h[static_cast<std::size_t>(d1)]));
  out.trilinear = estimate("d3/dAdBdC", [&](int s) { return tri3(s); }, h[0]);
  out.quartic = estimate("d4/dA2dBdC", [&](int s) { return quartic(s); }, h[0]);
  return out;
}

}  // namespace cdl

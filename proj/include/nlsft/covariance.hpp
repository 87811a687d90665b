#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nlsft/errors.hpp"
#include "nlsft/zs.hpp"

namespace nlsft {

// Scattering-domain covariance of one amplifier's additive white Gaussian
// noise, linearized around the noiseless signal.  The augmented coordinate
// vector is
//   v = [ dlambda(N), dlambda*(N), dmu(N), dmu*(N), drho(Nc), drho*(Nc) ]
// and M0 = J J^H where J maps the 2M normalized real-time noise quadratures
// (g, g*) to v via the first-order perturbation integrals.

struct CovarianceBlocks {
  std::size_t N = 0;   // soliton modes
  std::size_t Nc = 0;  // continuum pairs
  Eigen::MatrixXcd M0;  // (4N + 2Nc) square, Hermitian, det M0 = 1
  double raw_log2_det = 0;  // log2 det of the unscaled Jacobian Gramian

  // sector views in the ((X, X*), (Y, Y*)) pairing of the augmented layout
  Eigen::MatrixXcd lambda_lambda;  // 2N x 2N
  Eigen::MatrixXcd mu_mu;          // 2N x 2N
  Eigen::MatrixXcd rho_rho;        // 2Nc x 2Nc
  Eigen::MatrixXcd lambda_mu;      // 2N x 2N   cov(dlambda-sector, dmu-sector)
  Eigen::MatrixXcd lambda_rho;     // 2N x 2Nc
  Eigen::MatrixXcd rho_mu;         // 2Nc x 2N

  std::size_t dim() const { return 4 * N + 2 * Nc; }
  std::size_t dof() const { return 2 * N + Nc; }  // complex degrees of freedom
};

namespace detail {

// Jacobian rows of (dlambda, dlambda*, dmu, dmu*, drho, drho*) with respect
// to the unit-variance noise quadratures (g_p, g*_p); columns 0..M-1 act on
// g, columns M..2M-1 on g*.
inline Eigen::MatrixXcd jacobian_rows(const ScatteringState& st) {
  const std::size_t N = st.solitons.size();
  const std::size_t Nc = st.has_continuum ? st.continuum.xi_grid.size() : 0;
  const std::size_t M = st.M;
  const double tau = st.tau;
  const double rt = std::sqrt(tau);

  Eigen::MatrixXcd J = Eigen::MatrixXcd::Zero(
      static_cast<Eigen::Index>(4 * N + 2 * Nc),
      static_cast<Eigen::Index>(2 * M));

  for (std::size_t n = 0; n < N; ++n) {
    const SolitonMode& m = st.solitons[n];
    if (m.psi.cols() != static_cast<Eigen::Index>(M) ||
        m.psi_prime.cols() != static_cast<Eigen::Index>(M))
      throw StructuralError("mode " + std::to_string(n) +
                            " lacks eigenfunction data; scatter with norming");
    if (std::abs(m.gamma_n) < 1e-14)
      throw NumericalError("degenerate norming constant for mode " +
                           std::to_string(n));
    const Eigen::Index rl = static_cast<Eigen::Index>(n);
    const Eigen::Index rlc = static_cast<Eigen::Index>(N + n);
    const Eigen::Index rm = static_cast<Eigen::Index>(2 * N + n);
    const Eigen::Index rmc = static_cast<Eigen::Index>(3 * N + n);
    for (std::size_t p = 0; p < M; ++p) {
      const Eigen::Index cg = static_cast<Eigen::Index>(p);
      const Eigen::Index cgc = static_cast<Eigen::Index>(M + p);
      // the sample-p transfer step sits between lattice columns p and p+1, so
      // the exact lattice derivative pairs the eigenfunction across the step;
      // a same-column square form is only O(tau) accurate.  The last column
      // reuses p (the bound state has decayed to working precision there).
      const Eigen::Index cn =
          static_cast<Eigen::Index>(p + 1 < M ? p + 1 : p);
      // the transfer step is normalized by h_p, which divides its
      // u-derivative as well
      const double hp = st.sample_h.empty() ? 1.0 : st.sample_h[p];
      const cdouble p1 = m.psi(0, cg), p2 = m.psi(1, cg);
      const cdouble q1 = m.psi(0, cn), q2 = m.psi(1, cn);
      const cdouble lg = -rt * p1 * q1 / (m.gamma_n * hp);  // dlambda / dg
      const cdouble lgc = rt * p2 * q2 / (m.gamma_n * hp);  // dlambda / dg*
      // cross-step product rule, plus the half-sample shift of the norming
      // coefficient contributing i tau dlambda
      const cdouble d1 = p1 * m.psi_prime(0, cn) + m.psi_prime(0, cg) * q1;
      const cdouble d2 = p2 * m.psi_prime(1, cn) + m.psi_prime(1, cg) * q2;
      const cdouble mg =
          -rt * d1 / (m.gamma_n * hp) + cdouble(0, tau) * lg;  // dmu / dg
      const cdouble mgc =
          rt * d2 / (m.gamma_n * hp) + cdouble(0, tau) * lgc;  // dmu / dg*
      J(rl, cg) = lg;
      J(rl, cgc) = lgc;
      J(rlc, cg) = std::conj(lgc);
      J(rlc, cgc) = std::conj(lg);
      J(rm, cg) = mg;
      J(rm, cgc) = mgc;
      J(rmc, cg) = std::conj(mgc);
      J(rmc, cgc) = std::conj(mg);
    }
  }

  if (Nc > 0) {
    const double period = M_PI / tau;
    for (std::size_t j = 0; j < Nc; ++j) {
      const cdouble a = st.continuum.a_vals[j];
      if (std::abs(a) < 1e-10)
        throw NumericalError("vanishing a(xi) for continuum index " +
                             std::to_string(j));
      // midpoint spacing of the sorted xi grid with periodic wrap
      const double lo = j == 0
          ? st.continuum.xi_grid.back() - period
          : st.continuum.xi_grid[j - 1];
      const double hi = j + 1 == Nc
          ? st.continuum.xi_grid.front() + period
          : st.continuum.xi_grid[j + 1];
      const double dxi = 0.5 * (hi - lo);
      const cdouble c = std::sqrt(dxi / M_PI) * rt / (cdouble(0, -1) * a * a);
      const Eigen::Matrix2Xcd& phi = st.continuum.jost_phi[j];
      if (phi.cols() != static_cast<Eigen::Index>(M))
        throw StructuralError("continuum eigenfunction size mismatch");
      const Eigen::Index rr = static_cast<Eigen::Index>(4 * N + j);
      const Eigen::Index rrc = static_cast<Eigen::Index>(4 * N + Nc + j);
      for (std::size_t p = 0; p < M; ++p) {
        const Eigen::Index cg = static_cast<Eigen::Index>(p);
        const Eigen::Index cgc = static_cast<Eigen::Index>(M + p);
        const cdouble f1 = phi(0, cg), f2 = phi(1, cg);
        const double hp = st.sample_h.empty() ? 1.0 : st.sample_h[p];
        const cdouble rg = c * f1 * f1 / hp;    // drho / dg
        const cdouble rgc = -c * f2 * f2 / hp;  // drho / dg*
        J(rr, cg) = rg;
        J(rr, cgc) = rgc;
        J(rrc, cg) = std::conj(rgc);
        J(rrc, cgc) = std::conj(rg);
      }
    }
  }
  return J;
}

inline Eigen::MatrixXcd hermitize(const Eigen::MatrixXcd& A) {
  return 0.5 * (A + A.adjoint());
}

}  // namespace detail

/// Row norms of the data Jacobian, used to pin per-mode differential scales
/// across amplifiers (see blocks_at_amplifier).
inline Eigen::VectorXd jacobian_row_norms(const ScatteringState& st) {
  return detail::jacobian_rows(st).rowwise().norm();
}

/// Gramian of the data Jacobian at one amplifier.
///
/// When ref_row_norms is given (taken from jacobian_row_norms of the link
/// input state), every row is rescaled to the reference norm before the
/// Gramian is formed.  In a finite periodic window the deterministic mode
/// translation between amplifiers leaks an exponential drift into the row
/// scales (the norming constants pick up the translation factor), which is a
/// frame artifact rather than a change of noise sensitivity: white noise is
/// translation invariant.  Pinning the scales to the input frame removes the
/// artifact while leaving the row directions (the genuine correlation
/// structure) untouched.
inline CovarianceBlocks blocks_at_amplifier(
    const ScatteringState& st,
    const Eigen::VectorXd* ref_row_norms = nullptr) {
  CovarianceBlocks b;
  b.N = st.solitons.size();
  b.Nc = st.has_continuum ? st.continuum.xi_grid.size() : 0;
  Eigen::MatrixXcd J = detail::jacobian_rows(st);
  if (ref_row_norms != nullptr) {
    if (ref_row_norms->size() != J.rows())
      throw StructuralError("reference row-norm vector dimension mismatch");
    for (Eigen::Index r = 0; r < J.rows(); ++r) {
      const double nr = J.row(r).norm();
      if (nr < 1e-300)
        throw NumericalError("vanishing Jacobian row " + std::to_string(r));
      J.row(r) *= (*ref_row_norms)(r) / nr;
    }
  }
  b.M0 = detail::hermitize(J * J.adjoint());

  // The differentials carry an arbitrary overall bookkeeping scale per mode
  // (branch constants of mu, eigenfunction normalization, row gauge), none of
  // which is observable: capacity expressions use det S only through ratios
  // against the linear-limit reference.  Fix the convention by the
  // linear-limit calibration det M0 = 1: divide by the geometric mean of the
  // Gramian spectrum.  The raw determinant is kept as a diagnostic.
  if (b.M0.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(b.M0);
    if (es.info() != Eigen::Success)
      throw NumericalError("eigensolver failed on the Jacobian Gramian");
    Eigen::ArrayXd ev = es.eigenvalues().array();
    const double floor = 1e-14 * ev.maxCoeff();
    if (!(floor > 0))
      throw NumericalError("Jacobian Gramian has no positive spectrum");
    // directions below the working-precision floor are clipped rather than
    // rejected: they are data combinations the window cannot resolve, and
    // the floor keeps the determinant convention well defined there
    if (ev.minCoeff() <= floor) {
      ev = ev.max(floor);
      b.M0 = es.eigenvectors() * ev.matrix().asDiagonal() *
             es.eigenvectors().adjoint();
      b.M0 = detail::hermitize(b.M0);
    }
    const double logdet = ev.log().sum();
    b.raw_log2_det = logdet / std::log(2.0);
    b.M0 *= std::exp(-logdet / static_cast<double>(b.M0.rows()));
  }

  const Eigen::Index N = static_cast<Eigen::Index>(b.N);
  const Eigen::Index Nc = static_cast<Eigen::Index>(b.Nc);
  b.lambda_lambda = b.M0.block(0, 0, 2 * N, 2 * N);
  b.mu_mu = b.M0.block(2 * N, 2 * N, 2 * N, 2 * N);
  b.rho_rho = b.M0.block(4 * N, 4 * N, 2 * Nc, 2 * Nc);
  b.lambda_mu = b.M0.block(0, 2 * N, 2 * N, 2 * N);
  b.lambda_rho = b.M0.block(0, 4 * N, 2 * N, 2 * Nc);
  b.rho_mu = b.M0.block(4 * N, 2 * N, 2 * Nc, 2 * N);
  return b;
}

// ---------------------------------------------------------------------------
// Gordon-Haus drift terms.  A noise-induced eigenvalue shift at amplifier k
// rotates the accumulated mu phase over the remaining distance:
//   dmu(end) = dmu0 - (i alpha_k lambda_n + a''/a') dlambda0,
// alpha_k = 8 (K - k) L_s.

struct GordonHausTerms {
  double alpha_k = 0;
  Eigen::VectorXcd delta_lambda;  // lambda_{n,0}
  Eigen::VectorXcd A0;            // a''(lambda_{n,0}) / a'(lambda_{n,0})

  // diagonal of D^k over the (dlambda, dlambda*) sector
  Eigen::VectorXcd dk_diagonal() const {
    const Eigen::Index N = delta_lambda.size();
    Eigen::VectorXcd d(2 * N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const cdouble e = cdouble(0, alpha_k) * delta_lambda(n) + A0(n);
      d(n) = e;
      d(N + n) = std::conj(e);
    }
    return d;
  }
};

inline GordonHausTerms gordon_haus_terms(const ScatteringState& state0, int k,
                                         int K, double L_s,
                                         bool include_A0 = true) {
  if (k < 1 || k > K) throw ParameterError("amplifier index out of range");
  if (!(L_s >= 0)) throw ParameterError("negative span length");
  GordonHausTerms gh;
  gh.alpha_k = 8.0 * static_cast<double>(K - k) * L_s;
  const Eigen::Index N = static_cast<Eigen::Index>(state0.solitons.size());
  gh.delta_lambda.resize(N);
  gh.A0.resize(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const SolitonMode& m = state0.solitons[static_cast<std::size_t>(n)];
    if (std::abs(m.a_prime) < 1e-14)
      throw NumericalError("degenerate a'(lambda) for mode " +
                           std::to_string(n));
    gh.delta_lambda(n) = m.lambda;
    gh.A0(n) = include_A0 ? m.a_double_prime / m.a_prime : cdouble(0, 0);
  }
  return gh;
}

// ---------------------------------------------------------------------------
// Per-amplifier covariance with the Gordon-Haus congruence applied:
//   M^k = T_k M^0k T_k^H,  T_k = I with the mu-sector rows picking up
//   -D^k times the lambda-sector rows (unit determinant by construction).
// An explicitly expanded block form is evaluated as a cross-check.

inline Eigen::MatrixXcd assemble_Mk(const CovarianceBlocks& blocks,
                                    const GordonHausTerms& gh) {
  const Eigen::Index N = static_cast<Eigen::Index>(blocks.N);
  const Eigen::Index Nc = static_cast<Eigen::Index>(blocks.Nc);
  const Eigen::Index dim = static_cast<Eigen::Index>(blocks.dim());
  if (gh.delta_lambda.size() != N)
    throw StructuralError("Gordon-Haus diagonal does not match mode count");
  if (N == 0) return blocks.M0;

  const Eigen::VectorXcd d = gh.dk_diagonal();  // length 2N
  Eigen::MatrixXcd T = Eigen::MatrixXcd::Identity(dim, dim);
  for (Eigen::Index i = 0; i < 2 * N; ++i) T(2 * N + i, i) = -d(i);
  Eigen::MatrixXcd Mk = detail::hermitize(T * blocks.M0 * T.adjoint());

  // expanded form: only the mu rows/columns change
  const Eigen::MatrixXcd D = d.asDiagonal();
  Eigen::MatrixXcd Mx = blocks.M0;
  const Eigen::MatrixXcd Lll = blocks.lambda_lambda;
  const Eigen::MatrixXcd Llm = blocks.lambda_mu;  // cov(lambda, mu)
  Mx.block(2 * N, 2 * N, 2 * N, 2 * N) +=
      -D * Llm - Llm.adjoint() * D.adjoint() + D * Lll * D.adjoint();
  Mx.block(0, 2 * N, 2 * N, 2 * N) += -Lll * D.adjoint();
  Mx.block(2 * N, 0, 2 * N, 2 * N) += -D * Lll;
  if (Nc > 0) {
    const Eigen::MatrixXcd Lrho = blocks.lambda_rho;  // cov(lambda, rho)
    Mx.block(2 * N, 4 * N, 2 * N, 2 * Nc) += -D * Lrho;
    Mx.block(4 * N, 2 * N, 2 * Nc, 2 * N) += -Lrho.adjoint() * D.adjoint();
  }
  Mx = detail::hermitize(Mx);
  const double scale = std::max(1.0, Mk.cwiseAbs().maxCoeff());
  if ((Mk - Mx).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericalError("Gordon-Haus congruence and expanded block forms "
                         "disagree");
  return Mk;
}

// ---------------------------------------------------------------------------
// Link covariance S and its ablated variants.

struct NoiseCovariance {
  Eigen::MatrixXcd S;
  std::string variant;  // "full", "nogh", "noprop"
  double eps2 = 0;
  int K = 1;
};

namespace detail {

inline void check_hermitian_pd(const Eigen::MatrixXcd& S, double eps2) {
  if (S.rows() == 0) return;
  if ((S - S.adjoint()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, S.cwiseAbs().maxCoeff()))
    throw NumericalError("covariance not Hermitian after symmetrization");
  if (eps2 > 0) {
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(S);
    if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().real().array() <= 0).any()) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(S);
      throw NumericalError(
          "covariance not positive definite; smallest eigenvalue " +
          std::to_string(es.eigenvalues().minCoeff()));
    }
  }
}

}  // namespace detail

inline NoiseCovariance assemble_S(const std::vector<Eigen::MatrixXcd>& Mk_list,
                                  double eps2) {
  if (Mk_list.empty()) throw ParameterError("no per-amplifier matrices");
  Eigen::MatrixXcd sum =
      Eigen::MatrixXcd::Zero(Mk_list.front().rows(), Mk_list.front().cols());
  for (const auto& Mk : Mk_list) {
    if (Mk.rows() != sum.rows() || Mk.cols() != sum.cols())
      throw StructuralError("per-amplifier covariance dimensions differ");
    sum += Mk;
  }
  NoiseCovariance out;
  out.S = detail::hermitize(eps2 * sum);
  out.variant = "full";
  out.eps2 = eps2;
  out.K = static_cast<int>(Mk_list.size());
  detail::check_hermitian_pd(out.S, eps2);
  return out;
}

inline NoiseCovariance assemble_S_noGH(
    const std::vector<CovarianceBlocks>& per_amplifier, double eps2) {
  std::vector<Eigen::MatrixXcd> M0s;
  M0s.reserve(per_amplifier.size());
  for (const auto& b : per_amplifier) M0s.push_back(b.M0);
  NoiseCovariance out = assemble_S(M0s, eps2);
  out.variant = "nogh";
  return out;
}

inline double zeta_K(int K, double L_s) {
  if (K < 1) throw ParameterError("K must be positive");
  return (16.0 / 3.0) * (static_cast<double>(K) * K - 1.0) * L_s * L_s;
}

// Input-side approximation: all amplifiers share the x = 0 blocks; the
// Gordon-Haus sum over alpha_k collapses to the zeta_K variance term
// inflating the mu-mu sector:
//   S = K eps2 [[Lll, Llm], [Llm^H, Lmm + zeta_K D1 Lll D1^H]],
//   D1 = diag(i lambda_n ; -i lambda_n*).
inline NoiseCovariance assemble_S_noProp(const ScatteringState& state0, int K,
                                         double L_s, double eps2) {
  const CovarianceBlocks blocks0 = blocks_at_amplifier(state0);
  const Eigen::Index N = static_cast<Eigen::Index>(blocks0.N);
  Eigen::MatrixXcd S = blocks0.M0;
  if (N > 0) {
    Eigen::VectorXcd d1(2 * N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const cdouble lam = state0.solitons[static_cast<std::size_t>(n)].lambda;
      d1(n) = cdouble(0, 1) * lam;
      d1(N + n) = std::conj(d1(n));
    }
    const Eigen::MatrixXcd D1 = d1.asDiagonal();
    S.block(2 * N, 2 * N, 2 * N, 2 * N) +=
        zeta_K(K, L_s) * D1 * blocks0.lambda_lambda * D1.adjoint();
  }
  NoiseCovariance out;
  out.S = detail::hermitize(static_cast<double>(K) * eps2 * S);
  out.variant = "noprop";
  out.eps2 = eps2;
  out.K = K;
  detail::check_hermitian_pd(out.S, eps2);
  return out;
}

// structured text export: dimension, variant, eps2, row-major entries
inline void save_covariance(std::ostream& os, const NoiseCovariance& nc) {
  os << "nlsft-covariance v1\n";
  os << "dim " << nc.S.rows() << "\n";
  os << "variant " << nc.variant << "\n";
  os << "eps2 " << nc.eps2 << "\n";
  os << "K " << nc.K << "\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < nc.S.rows(); ++i)
    for (Eigen::Index j = 0; j < nc.S.cols(); ++j)
      os << nc.S(i, j).real() << " " << nc.S(i, j).imag() << "\n";
}

// log2 det via LDLT of the Hermitian positive-definite matrix
inline double log_det(const NoiseCovariance& nc) {
  if (nc.S.rows() == 0) return 0.0;
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(detail::hermitize(nc.S));
  if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().real().array() <= 0).any()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(nc.S);
    throw NumericalError(
        "log_det needs a positive-definite matrix; smallest eigenvalue " +
        std::to_string(es.eigenvalues().minCoeff()));
  }
  return ldlt.vectorD().real().array().log().sum() / std::log(2.0);
}

inline double log_det(const Eigen::MatrixXcd& S) {
  NoiseCovariance nc;
  nc.S = S;
  nc.eps2 = 1;
  return log_det(nc);
}

}  // namespace nlsft

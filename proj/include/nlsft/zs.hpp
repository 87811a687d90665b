#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "nlsft/errors.hpp"
#include "nlsft/signal.hpp"

namespace nlsft {

// Direct scattering of a sampled envelope.  The scattering problem is the
// modified Ablowitz-Ladik lattice
//   v1_{p+1} = (z v1_p + Q_p v2_p)/h_p
//   v2_{p+1} = (R_p v1_p + z^{-1} v2_p)/h_p
// with Q_p = i tau conj(u_p), R_p = i tau u_p, h_p = sqrt(1 + tau^2|u_p|^2)
// and z = exp(-i lambda tau).  Bound states have |z| > 1 (eta > 0).
// The grid is t_p = t0 + p tau with t0 = -M tau / 2, so eta = ln|z|/tau and
// xi = -arg(z)/tau.

struct SolitonMode {
  cdouble lambda;           // xi + i eta, eta > 0, quadruplet representative
  cdouble b = 0;            // norming coefficient
  cdouble mu = 0;           // log(b / a')
  cdouble gamma_n = 0;      // 2 * sum psi1 psi2 tau (no conjugation)
  cdouble a_prime = 0;      // da/dlambda at lambda
  cdouble a_double_prime = 0;
  Eigen::Matrix2Xcd psi;        // eigenfunction, column p = sample p
  Eigen::Matrix2Xcd psi_prime;  // lambda-derivative of the Jost solution
};

struct ContinuumData {
  std::vector<double> xi_grid;               // sorted, one per +/-z pair
  std::vector<cdouble> rho;                  // reflection b/a
  std::vector<cdouble> a_vals;               // a(xi)
  std::vector<Eigen::Matrix2Xcd> jost_phi;   // forward Jost solution per xi
};

struct ScatteringState {
  std::vector<SolitonMode> solitons;  // sorted by (eta, xi)
  ContinuumData continuum;
  bool has_continuum = false;
  std::size_t M = 0;
  double tau = 0;
  double position_x = 0;
  std::vector<double> sample_h;  // sqrt(1 + tau^2 |u_p|^2) per sample
};

// ---------------------------------------------------------------------------
// Dense eigenproblem.  Rearranging the forward recursion (first row) and the
// inverse recursion (second row) gives a standard eigenproblem A x = z x for
// x = (v1_0..v1_{M-1}, v2_0..v2_{M-1}) with periodic closure:
//   z v1_p = h_p v1_{p+1} - Q_p v2_p
//   z v2_p = h_{p-1} v2_{p-1} + R_{p-1} v1_p
inline Eigen::MatrixXcd discrete_zs_matrix(const Signal& s) {
  s.validate();
  const std::size_t M = s.size();
  const double tau = s.tau;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(2 * M, 2 * M);
  for (std::size_t p = 0; p < M; ++p) {
    const cdouble u = s.samples[p];
    const cdouble up = s.samples[(p + M - 1) % M];
    const double h = std::sqrt(1.0 + tau * tau * std::norm(u));
    const double hp = std::sqrt(1.0 + tau * tau * std::norm(up));
    const cdouble Q = cdouble(0, tau) * std::conj(u);
    const cdouble Rp = cdouble(0, tau) * up;
    A(p, (p + 1) % M) = h;
    A(p, M + p) = -Q;
    A(M + p, M + (p + M - 1) % M) = hp;
    A(M + p, p) = Rp;
  }
  return A;
}

// ---------------------------------------------------------------------------
// Jost transfer passes.  Everything is propagated for the prefactor-free
// phi_tilde = exp(i lambda t0) phi, with phi_tilde_0 = (1, 0), so that
//   a  = phi_tilde_1(M) z^{-M}
//   b  = phi_tilde_2(M)                (symmetric window, t0 + tM = 0)
//   a' = z^{-M} (phi_tilde_1'(M) + i M tau phi_tilde_1(M))
//   a''= z^{-M} (phi_tilde_1''(M) + 2 i M tau phi_tilde_1'(M)
//                - M^2 tau^2 phi_tilde_1(M))
// Magnitudes are kept in range by rescaling with an accumulated natural-log
// exponent.

namespace detail {

inline void rescale3(Eigen::Vector2cd& a, Eigen::Vector2cd& b,
                     Eigen::Vector2cd& c, double& logscale) {
  const double m = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(),
                             c.cwiseAbs().maxCoeff()});
  if (m > 1e140 || (m > 0 && m < 1e-140)) {
    a /= m;
    b /= m;
    c /= m;
    logscale += std::log(m);
  }
}

inline cdouble exp_guarded(cdouble w, const char* what) {
  if (w.real() > 690.0)
    throw NumericalError(std::string("overflow assembling ") + what +
                         "; shrink the time window or eta range");
  return std::exp(w);
}

}  // namespace detail

struct JostCoefficients {
  cdouble a, a_prime, a_double_prime;
  cdouble b;  // meaningful at bound states and real xi (symmetric window)
};

struct ForwardPass {
  Eigen::Matrix2Xcd phi, dphi, d2phi;  // scaled phi_tilde columns 0..M
  std::vector<double> logscale;        // per-column exponent
  JostCoefficients coeffs;
};

inline ForwardPass forward_jost_pass(const Signal& s, cdouble lambda,
                                     bool store = true) {
  const std::size_t M = s.size();
  const double tau = s.tau;
  const cdouble z = std::exp(cdouble(0, -1) * lambda * tau);
  const cdouble zi = 1.0 / z;

  Eigen::Vector2cd f(1, 0), df(0, 0), d2f(0, 0);
  double ls = 0;
  ForwardPass out;
  if (store) {
    out.phi.resize(2, M + 1);
    out.dphi.resize(2, M + 1);
    out.d2phi.resize(2, M + 1);
    out.logscale.resize(M + 1);
    out.phi.col(0) = f;
    out.dphi.col(0) = df;
    out.d2phi.col(0) = d2f;
    out.logscale[0] = 0;
  }
  for (std::size_t p = 0; p < M; ++p) {
    const cdouble u = s.samples[p];
    const double h = std::sqrt(1.0 + tau * tau * std::norm(u));
    const cdouble Q = cdouble(0, tau) * std::conj(u);
    const cdouble R = cdouble(0, tau) * u;
    Eigen::Matrix2cd T, dT, d2T;
    T << z, Q, R, zi;
    dT << cdouble(0, -tau) * z, 0, 0, cdouble(0, tau) * zi;
    d2T << -tau * tau * z, 0, 0, -tau * tau * zi;
    T /= h;
    dT /= h;
    d2T /= h;
    d2f = (T * d2f + 2.0 * (dT * df) + d2T * f).eval();
    df = (T * df + dT * f).eval();
    f = (T * f).eval();
    detail::rescale3(f, df, d2f, ls);
    if (store) {
      out.phi.col(p + 1) = f;
      out.dphi.col(p + 1) = df;
      out.d2phi.col(p + 1) = d2f;
      out.logscale[p + 1] = ls;
    }
  }
  const double Mt = static_cast<double>(M) * tau;
  // z^{-M} e^{ls} = exp(ls + i lambda M tau)
  const cdouble fac =
      detail::exp_guarded(cdouble(ls, 0) + cdouble(0, 1) * lambda * Mt, "a");
  out.coeffs.a = fac * f(0);
  out.coeffs.a_prime = fac * (df(0) + cdouble(0, Mt) * f(0));
  out.coeffs.a_double_prime =
      fac * (d2f(0) + 2.0 * cdouble(0, Mt) * df(0) - Mt * Mt * f(0));
  // the left-endpoint transfer step samples u half a step early, which shows
  // up as an exact half-sample time shift of b; undo it
  out.coeffs.b = detail::exp_guarded(
                     cdouble(ls, 0) + cdouble(0, 1) * lambda * tau, "b") *
                 f(1);
  if (!std::isfinite(std::abs(out.coeffs.a)))
    throw NumericalError("Jost propagation produced non-finite a");
  return out;
}

inline JostCoefficients jost_and_a(const Signal& s, cdouble lambda) {
  if (lambda.imag() < 0)
    throw ParameterError("lambda must lie in the closed upper half plane");
  return forward_jost_pass(s, lambda, false).coeffs;
}

struct BackwardPass {
  Eigen::Matrix2Xcd chi;         // scaled chi_tilde columns 0..M
  std::vector<double> logscale;  // chi = chi_tilde e^{ls} e^{i lambda tM}
};

inline BackwardPass backward_jost_pass(const Signal& s, cdouble lambda) {
  const std::size_t M = s.size();
  const double tau = s.tau;
  const cdouble z = std::exp(cdouble(0, -1) * lambda * tau);
  const cdouble zi = 1.0 / z;

  BackwardPass out;
  out.chi.resize(2, M + 1);
  out.logscale.resize(M + 1);
  Eigen::Vector2cd g(0, 1), dummy1(0, 0), dummy2(0, 0);
  double ls = 0;
  out.chi.col(M) = g;
  out.logscale[M] = 0;
  for (std::size_t q = M; q-- > 0;) {
    const cdouble u = s.samples[q];
    const double h = std::sqrt(1.0 + tau * tau * std::norm(u));
    const cdouble Q = cdouble(0, tau) * std::conj(u);
    const cdouble R = cdouble(0, tau) * u;
    Eigen::Matrix2cd Ti;  // unit-determinant inverse step
    Ti << zi, -Q, -R, z;
    Ti /= h;
    g = (Ti * g).eval();
    detail::rescale3(g, dummy1, dummy2, ls);
    out.chi.col(q) = g;
    out.logscale[q] = ls;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Eigenvalue refinement: Newton on a(lambda) using the recursion derivative.
inline cdouble refine_eigenvalue(const Signal& s, cdouble lambda,
                                 double tol = 1e-8, int max_iter = 40) {
  for (int it = 0; it < max_iter; ++it) {
    const JostCoefficients j = forward_jost_pass(s, lambda, false).coeffs;
    if (std::abs(j.a_prime) < 1e-300)
      throw NumericalError("degenerate eigenvalue: |a'| underflow in Newton");
    const cdouble step = j.a / j.a_prime;
    lambda -= step;
    if (std::abs(step) < tol * 1e-2 * (1.0 + std::abs(lambda))) return lambda;
  }
  const cdouble a = forward_jost_pass(s, lambda, false).coeffs.a;
  if (std::abs(a) > tol)
    throw NumericalError("Newton refinement of an eigenvalue did not converge");
  return lambda;
}

// ---------------------------------------------------------------------------
// Norming data and eigenfunctions for one accepted eigenvalue.
//
// psi is the Jost solution phi, assembled piecewise: forward phi up to the
// index of maximum magnitude, b * chi (backward Jost) beyond it, which keeps
// both exponential tails accurate.  psi_prime is the forward-propagated
// lambda-derivative of phi; its growing part is the genuine a' component and
// dominates wherever psi has decayed, so products psi*psi_prime stay accurate.
// Both are stored with a common normalization (max |psi| = 1); every
// covariance functional is invariant under that joint rescaling.
inline void norming_data(const Signal& s, SolitonMode& mode) {
  const std::size_t M = s.size();
  const double tau = s.tau;
  const double t0 = s.t0();
  const double tM = -t0;
  const cdouble lambda = mode.lambda;

  const ForwardPass fwd = forward_jost_pass(s, lambda, true);
  const BackwardPass bwd = backward_jost_pass(s, lambda);

  mode.a_prime = fwd.coeffs.a_prime;
  mode.a_double_prime = fwd.coeffs.a_double_prime;
  if (std::abs(mode.a_prime) < 1e-12 * (1.0 + std::abs(mode.a_double_prime)))
    throw NumericalError("degenerate eigenvalue: |a'| below threshold");

  // matching index: maximum of |phi| (true scale), well inside the pulse
  const double eta = lambda.imag();
  std::size_t pstar = 0;
  double best = -1e300;
  for (std::size_t p = 0; p <= M; ++p) {
    const double mag = std::log(fwd.phi.col(p).norm() + 1e-300) +
                       fwd.logscale[p] + eta * t0;
    if (mag > best) {
      best = mag;
      pstar = p;
    }
  }

  // b from the dominant component at the matching point:
  // log b = log phi_c - log chi_c  (true scales); the component must be
  // nonzero in both solutions (at the window edge one chi component is an
  // exact zero of the boundary condition)
  const int c = (std::abs(fwd.phi(0, pstar) * bwd.chi(0, pstar)) >
                 std::abs(fwd.phi(1, pstar) * bwd.chi(1, pstar)))
                    ? 0
                    : 1;
  if (std::abs(fwd.phi(c, pstar)) == 0 || std::abs(bwd.chi(c, pstar)) == 0)
    throw NumericalError("non-normalizable mode: vanishing eigenfunction");
  // raw matching ratio; used as-is to glue the piecewise eigenfunction
  const cdouble log_b =
      (std::log(fwd.phi(c, pstar)) + cdouble(fwd.logscale[pstar], 0) -
       cdouble(0, 1) * lambda * t0) -
      (std::log(bwd.chi(c, pstar)) + cdouble(bwd.logscale[pstar], 0) +
       cdouble(0, 1) * lambda * tM);
  // reported b carries the half-sample shift correction (see forward pass)
  const cdouble log_b_rep = log_b + cdouble(0, 1) * lambda * tau;
  mode.b = detail::exp_guarded(log_b_rep, "b");
  mode.mu = log_b_rep - std::log(mode.a_prime);

  // common normalization exponent: max over the piecewise |psi|
  double Lmax = best;  // forward side
  for (std::size_t p = pstar; p <= M; ++p) {
    const double mag = std::log(bwd.chi.col(p).norm() + 1e-300) +
                       bwd.logscale[p] - eta * tM + log_b.real();
    Lmax = std::max(Lmax, mag);
  }

  mode.psi.resize(2, M);
  mode.psi_prime.resize(2, M);
  for (std::size_t p = 0; p < M; ++p) {
    if (p <= pstar) {
      const cdouble w = detail::exp_guarded(
          cdouble(fwd.logscale[p] - Lmax, 0) - cdouble(0, 1) * lambda * t0,
          "psi");
      mode.psi.col(p) = fwd.phi.col(p) * w;
    } else {
      const cdouble w = detail::exp_guarded(
          log_b + cdouble(bwd.logscale[p] - Lmax, 0) +
              cdouble(0, 1) * lambda * tM,
          "psi");
      mode.psi.col(p) = bwd.chi.col(p) * w;
    }
    // psi_prime = d/dlambda [ e^{-i lambda t0} phi_tilde ] e^{-Lmax}
    const cdouble w = detail::exp_guarded(
        cdouble(fwd.logscale[p] - Lmax, 0) - cdouble(0, 1) * lambda * t0,
        "psi_prime");
    mode.psi_prime.col(p) =
        (fwd.dphi.col(p) - cdouble(0, t0) * fwd.phi.col(p)) * w;
  }

  cdouble g = 0;
  for (std::size_t p = 0; p < M; ++p) g += mode.psi(0, p) * mode.psi(1, p);
  mode.gamma_n = 2.0 * g * tau;
  double gscale = 0;
  for (std::size_t p = 0; p < M; ++p)
    gscale += std::abs(mode.psi(0, p)) * std::abs(mode.psi(1, p));
  gscale *= 2.0 * tau;
  if (std::abs(mode.gamma_n) < 1e-8 * gscale || gscale == 0)
    throw NumericalError("non-normalizable mode: |gamma_n| below threshold");
}

// ---------------------------------------------------------------------------
// Lambda-derivative eigenfunction.  The periodic lattice operator is exactly
// singular at a bound state, and on a finite window the glued eigenfunction
// is not an exact null vector, so a least-squares solve of
// (A - z_n) x = dz/dlambda psi_n is ill-posed.  The derivative of the Jost
// transfer recursion (propagated alongside the forward pass, as stored by
// norming_data) satisfies the same first-order relation sample by sample and
// matches a centered finite difference of the Jost solutions in lambda.
inline Eigen::Matrix2Xcd derivative_eigenfunction(const Signal& s,
                                                  const SolitonMode& mode) {
  if (mode.psi.cols() == 0)
    throw ParameterError("mode has no eigenfunction; run norming_data first");
  if (mode.psi_prime.cols() == mode.psi.cols()) return mode.psi_prime;
  SolitonMode m;
  m.lambda = mode.lambda;
  norming_data(s, m);
  return m.psi_prime;
}

// ---------------------------------------------------------------------------
// Spectrum extraction.

struct SpectrumOptions {
  std::size_t dense_cap = 640;  // largest M solved densely at full resolution
  double eta_floor = 1e-6;
  double eta_rel = 1e-3;        // eta_min = max(floor, rel * max eta)
  double newton_tol = 1e-8;
  bool newton_refine = true;    // post-refine to zeros of the Jost a(lambda)
  bool with_norming = true;     // fill b, mu, gamma, psi, psi_prime
  bool with_continuum = false;
};

namespace detail {

inline double fold_xi(double xi, double tau) {
  // representative real part in [-pi/(2 tau), pi/(2 tau))
  const double period = M_PI / tau;
  double f = std::remainder(xi, period);
  if (f >= period / 2) f -= period;
  return f;
}

struct RawEig {
  double eta, xi;
};

// all 2M eigenvalues of the AL matrix mapped to (eta, xi) with xi folded
inline std::vector<RawEig> raw_lattice_spectrum(const Signal& s) {
  const Eigen::MatrixXcd A = discrete_zs_matrix(s);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
  if (es.info() != Eigen::Success)
    throw NumericalError("dense eigensolver failed on the scattering matrix");
  std::vector<RawEig> out;
  out.reserve(static_cast<std::size_t>(es.eigenvalues().size()));
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const cdouble z = es.eigenvalues()(i);
    if (std::abs(z) == 0) throw NumericalError("zero lattice eigenvalue");
    out.push_back({std::log(std::abs(z)) / s.tau,
                   fold_xi(-std::arg(z) / s.tau, s.tau)});
  }
  return out;
}

inline Signal downsample(const Signal& s, std::size_t factor) {
  Signal c;
  c.tau = s.tau * static_cast<double>(factor);
  c.position_x = s.position_x;
  for (std::size_t p = 0; p + factor - 1 < s.size(); p += factor)
    c.samples.push_back(s.samples[p]);
  return c;
}

}  // namespace detail

inline ScatteringState scatter(const Signal& s, SpectrumOptions opts = {}) {
  s.validate();
  const std::size_t M = s.size();
  const double tau = s.tau;

  std::size_t factor = 1;
  while (M / factor > opts.dense_cap) factor *= 2;
  if (factor > 1 && opts.with_continuum)
    throw ParameterError("continuum extraction needs a full-resolution dense "
                         "solve; raise dense_cap");
  if (factor > 1 && !opts.newton_refine)
    throw ParameterError("unrefined lattice eigenvalues need a full-resolution "
                         "dense solve; raise dense_cap");
  const Signal coarse = factor > 1 ? detail::downsample(s, factor) : s;
  const std::vector<detail::RawEig> raw = detail::raw_lattice_spectrum(coarse);

  double eta_max = 0;
  for (const auto& e : raw) eta_max = std::max(eta_max, e.eta);
  const double eta_min = std::max(opts.eta_floor, opts.eta_rel * eta_max);

  // refine bound-state candidates on the full-resolution signal, then merge
  // the +/-z duplicates
  std::vector<cdouble> roots;
  for (const auto& e : raw) {
    if (e.eta <= eta_min) continue;
    cdouble lam;
    if (opts.newton_refine) {
      try {
        lam = refine_eigenvalue(s, cdouble(e.xi, e.eta), opts.newton_tol);
      } catch (const NumericalError&) {
        continue;  // stray coarse eigenvalue with no fine-grid root
      }
    } else {
      // raw lattice eigenvalue: exactly conserved by the integrable flow,
      // free of the half-line windowing sensitivity of the Jost a(lambda)
      lam = cdouble(e.xi, e.eta);
    }
    if (lam.imag() <= eta_min) continue;
    lam = cdouble(detail::fold_xi(lam.real(), tau), lam.imag());
    bool merged = false;
    for (const auto& r : roots)
      if (std::abs(r - lam) < 1e-5 * (1.0 + std::abs(lam))) {
        merged = true;
        break;
      }
    if (!merged) roots.push_back(lam);
  }
  std::sort(roots.begin(), roots.end(), [](cdouble a, cdouble b) {
    return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
  });

  ScatteringState st;
  st.M = M;
  st.tau = tau;
  st.position_x = s.position_x;
  st.sample_h.resize(M);
  for (std::size_t p = 0; p < M; ++p)
    st.sample_h[p] = std::sqrt(1.0 + tau * tau * std::norm(s.samples[p]));
  for (const cdouble lam : roots) {
    SolitonMode m;
    m.lambda = lam;
    if (opts.with_norming) {
      norming_data(s, m);
    } else {
      const JostCoefficients j = forward_jost_pass(s, lam, false).coeffs;
      m.a_prime = j.a_prime;
      m.a_double_prime = j.a_double_prime;
    }
    st.solitons.push_back(std::move(m));
  }

  if (opts.with_continuum) {
    // degrees-of-freedom counting: each bound-state quadruplet absorbs two of
    // the 2M lattice states per half plane, so N_c = M - 2N continuum modes
    // remain.  A uniform grid over one z-period of the real line carries them;
    // the raw near-real lattice eigenvalues drift with the potential and do
    // not form a usable quadrature grid.
    const std::size_t N = roots.size();
    const std::size_t Nc = M > 2 * N ? M - 2 * N : 0;
    st.continuum.xi_grid.clear();
    if (Nc > 0) {
      const double dxi = M_PI / (tau * static_cast<double>(Nc));
      for (std::size_t j = 0; j < Nc; ++j)
        st.continuum.xi_grid.push_back(-M_PI / (2.0 * tau) +
                                       (static_cast<double>(j) + 0.5) * dxi);
    }
    for (double xi : st.continuum.xi_grid) {
      const ForwardPass f = forward_jost_pass(s, cdouble(xi, 0), true);
      if (std::abs(f.coeffs.a) < 1e-8)
        throw NumericalError("continuum a(xi) below threshold at xi = " +
                             std::to_string(xi));
      st.continuum.a_vals.push_back(f.coeffs.a);
      st.continuum.rho.push_back(f.coeffs.b / f.coeffs.a);
      Eigen::Matrix2Xcd phi(2, M);
      const cdouble pre = std::exp(-cdouble(0, 1) * cdouble(xi, 0) * s.t0());
      for (std::size_t p = 0; p < M; ++p)
        phi.col(p) = f.phi.col(p) * (pre * std::exp(f.logscale[p]));
      st.continuum.jost_phi.push_back(std::move(phi));
    }
    st.has_continuum = true;
  }
  return st;
}

inline ScatteringState discrete_spectrum(const Signal& s,
                                         SpectrumOptions opts = {}) {
  opts.with_continuum = false;
  return scatter(s, opts);
}

inline ContinuumData continuum_data(const Signal& s, SpectrumOptions opts = {}) {
  opts.with_continuum = true;
  return scatter(s, opts).continuum;
}

// ---------------------------------------------------------------------------
// Inverse localization length: slope of log||Psi|| over the exponential tails.
inline double localization_length_estimate(const SolitonMode& mode, double tau,
                                           double min_depth = 2.0) {
  const Eigen::Index M = mode.psi.cols();
  if (M < 8) throw ParameterError("eigenfunction too short for a tail fit");
  std::vector<double> w(static_cast<std::size_t>(M));
  Eigen::Index pc = 0;
  double L0 = -1e300;
  for (Eigen::Index p = 0; p < M; ++p) {
    w[static_cast<std::size_t>(p)] = std::log(mode.psi.col(p).norm() + 1e-300);
    if (w[static_cast<std::size_t>(p)] > L0) {
      L0 = w[static_cast<std::size_t>(p)];
      pc = p;
    }
  }
  double slopes = 0;
  int sides = 0;
  for (int side = 0; side < 2; ++side) {
    const Eigen::Index end = side == 0 ? 0 : M - 1;
    const Eigen::Index dir = side == 0 ? -1 : +1;
    const double depth = L0 - w[static_cast<std::size_t>(end)];
    if (depth < min_depth) continue;  // tail not developed on this side
    // fit over the window between 1 and 7 e-folds below the peak
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (Eigen::Index p = pc; p != end + dir; p += dir) {
      const double drop = L0 - w[static_cast<std::size_t>(p)];
      if (drop < 1.0 || drop > 7.0) continue;
      const double t = tau * static_cast<double>(p);
      sx += t;
      sy += w[static_cast<std::size_t>(p)];
      sxx += t * t;
      sxy += t * w[static_cast<std::size_t>(p)];
      ++n;
    }
    if (n < 4) continue;
    const double denom = sxx - sx * sx / n;
    if (denom <= 0) continue;
    slopes += std::abs((sxy - sx * sy / n) / denom);
    ++sides;
  }
  if (sides == 0)
    throw StructuralError("window too small: no decayed tail to fit");
  return slopes / sides;
}

// ---------------------------------------------------------------------------
// Serialization (versioned text; eigenfunction tables optional).
inline void save_scattering(const ScatteringState& st, std::ostream& os,
                            bool with_eigenfunctions = false) {
  os.precision(17);
  os << "nlsft-scattering v1\n";
  os << "M " << st.M << "\n";
  os << "tau " << st.tau << "\n";
  os << "position_x " << st.position_x << "\n";
  os << "N " << st.solitons.size() << "\n";
  os << "N_c " << (st.has_continuum ? st.continuum.xi_grid.size() : 0) << "\n";
  auto put = [&os](cdouble v) { os << v.real() << " " << v.imag(); };
  for (const auto& m : st.solitons) {
    os << "mode ";
    put(m.lambda);
    os << " ";
    put(m.b);
    os << " ";
    put(m.mu);
    os << " ";
    put(m.gamma_n);
    os << " ";
    put(m.a_prime);
    os << " ";
    put(m.a_double_prime);
    os << "\n";
    if (with_eigenfunctions && m.psi.cols() > 0) {
      os << "psi " << m.psi.cols() << "\n";
      for (Eigen::Index p = 0; p < m.psi.cols(); ++p) {
        put(m.psi(0, p));
        os << " ";
        put(m.psi(1, p));
        os << "\n";
      }
    }
  }
  for (std::size_t j = 0; j < st.continuum.xi_grid.size(); ++j) {
    os << "cont " << st.continuum.xi_grid[j] << " ";
    put(st.continuum.rho[j]);
    os << " ";
    put(st.continuum.a_vals[j]);
    os << "\n";
  }
}

inline void save_scattering(const ScatteringState& st, const std::string& path,
                            bool with_eigenfunctions = false) {
  std::ofstream os(path);
  if (!os) throw ParameterError("cannot open " + path + " for writing");
  save_scattering(st, os, with_eigenfunctions);
}

}  // namespace nlsft

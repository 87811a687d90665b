#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "nlsft/errors.hpp"
#include "nlsft/rng.hpp"
#include "nlsft/signal.hpp"
#include "nlsft/zs.hpp"

namespace nlsft {

// Integrable-lattice propagation of i u_x + u_tt + 2|u|^2 u = 0 between
// amplifiers, via the Ablowitz-Ladik discretization
//   i du_p/dx = -(u_{p+1} + u_{p-1} - 2 u_p)/tau^2 - |u_p|^2 (u_{p+1} + u_{p-1})
// with periodic boundary conditions.  A second-order symmetric splitting is
// used: the linear lattice part advances exactly in Fourier space, the
// nonlinear neighbor coupling by the implicit midpoint rule.  The accuracy
// monitor is the drift of the discrete eigenvalues.

struct PropagationPlan {
  double span_length = 0;  // L_s
  int num_spans = 1;       // K
  double dx = 0;           // divides span_length exactly
  double eps2 = 0;
  std::uint64_t seed = 0;
};

/// Conserved functional of the AL lattice, sum log(1 + tau^2 |u_p|^2).
inline double al_norm(const Signal& s) {
  double n = 0;
  for (const auto& u : s.samples) n += std::log1p(s.tau * s.tau * std::norm(u));
  return n;
}

namespace detail {

// exact advance of i du/dx = -(Delta^2 u)/tau^2 over distance dx
inline void linear_lattice_step(std::vector<cdouble>& u, double tau, double dx,
                                bool fault = false) {
  const std::size_t M = u.size();
  static thread_local Eigen::FFT<double> fft;
  std::vector<cdouble> U(M);
  fft.fwd(U, u);
  const double c = fault ? 1.001 : 1.0;  // selftest fault injection
  for (std::size_t k = 0; k < M; ++k) {
    const double th = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(M);
    U[k] *= std::exp(cdouble(0, c * (2.0 * std::cos(th) - 2.0) * dx / (tau * tau)));
  }
  fft.inv(u, U);
}

// implicit midpoint for du_p/dx = i |u_p|^2 (u_{p+1} + u_{p-1})
inline void nonlinear_coupling_step(std::vector<cdouble>& u, double dx) {
  const std::size_t M = u.size();
  std::vector<cdouble> u0 = u, mid(M);
  for (int it = 0; it < 100; ++it) {
    double change = 0, scale = 0;
    for (std::size_t p = 0; p < M; ++p) mid[p] = 0.5 * (u0[p] + u[p]);
    for (std::size_t p = 0; p < M; ++p) {
      const cdouble rhs = cdouble(0, 1) * std::norm(mid[p]) *
                          (mid[(p + 1) % M] + mid[(p + M - 1) % M]);
      const cdouble next = u0[p] + dx * rhs;
      change += std::abs(next - u[p]);
      scale += std::abs(next);
      u[p] = next;
    }
    if (change <= 1e-15 * (scale + 1e-30)) return;
  }
  throw NumericalError("implicit midpoint iteration stalled; reduce dx");
}

}  // namespace detail

// Step-instability guard: the splitting conserves the AL norm functional to
// O(dx^2); a relative drift above norm_tol over one span signals that dx is
// too coarse for this signal.  (The plain L2 energy sum |u|^2 tau is *not* an
// invariant of the AL flow — it carries an intrinsic O(tau^2) wobble that no
// step refinement removes — so the conserved lattice functional is the only
// meaningful conservation monitor here.)
inline Signal propagate_span(const Signal& s, double L_s, double dx,
                             bool fault_injection = false,
                             double norm_tol = 1e-6) {
  s.validate();
  if (!(L_s >= 0) || !(dx > 0)) throw ParameterError("bad span or step length");
  const int steps = std::max(1, static_cast<int>(std::llround(L_s / dx)));
  const double h = L_s / steps;

  Signal out = s;
  const double norm_in = al_norm(s);
  for (int n = 0; n < steps; ++n) {
    detail::linear_lattice_step(out.samples, out.tau, h / 2, fault_injection);
    detail::nonlinear_coupling_step(out.samples, h);
    detail::linear_lattice_step(out.samples, out.tau, h / 2, fault_injection);
  }
  out.position_x = s.position_x + L_s;

  const double nscale = std::abs(norm_in) + 1e-12;
  if (std::abs(al_norm(out) - norm_in) > norm_tol * nscale)
    throw NumericalError(
        "step instability: AL norm drifted beyond tolerance over a span; "
        "reduce dx");
  return out;
}

/// Adds the k-th amplifier's noise draw: i.i.d. circular Gaussian with
/// per-sample variance eps2/tau, deterministic per (seed, k).
inline Signal inject_noise(const Signal& s, double eps2, int k,
                           std::uint64_t seed) {
  s.validate();
  if (eps2 < 0) throw ParameterError("eps2 must be non-negative");
  Signal out = s;
  if (eps2 == 0) return out;
  SplitStream rng(seed, static_cast<std::uint64_t>(k));
  const double var = eps2 / s.tau;
  for (auto& u : out.samples) u += rng.next_complex_gaussian(var);
  return out;
}

/// Step-size calibration: halve dx (at most max_halvings times) until one
/// noiseless span preserves every discrete eigenvalue to drift_tol.
inline PropagationPlan calibrate_plan(const Signal& s, double L_s, int K,
                                      double eps2, std::uint64_t seed,
                                      double dx_hint = 0,
                                      double drift_tol_factor = 1e-4,
                                      int max_halvings = 4) {
  PropagationPlan plan;
  plan.span_length = L_s;
  plan.num_spans = K;
  plan.eps2 = eps2;
  plan.seed = seed;
  plan.dx = dx_hint > 0 ? dx_hint : L_s / 64;

  SpectrumOptions opts;
  opts.with_norming = false;
  // raw lattice eigenvalues: exactly conserved by the underlying flow, so the
  // measured drift isolates the splitting error of the integrator
  opts.newton_refine = false;
  opts.dense_cap = std::max<std::size_t>(opts.dense_cap, s.size());
  const ScatteringState ref = discrete_spectrum(s, opts);
  if (ref.solitons.empty()) return plan;  // nothing to drift
  double eta_max = 0;
  for (const auto& m : ref.solitons) eta_max = std::max(eta_max, m.lambda.imag());
  // per-span budget: the acceptance criterion is over K spans
  const double tol = drift_tol_factor * eta_max / (2.0 * std::max(1, K));

  for (int attempt = 0;; ++attempt) {
    const Signal out = propagate_span(s, L_s, plan.dx);
    const ScatteringState after = discrete_spectrum(out, opts);
    double drift = tol + 1;
    if (after.solitons.size() == ref.solitons.size()) {
      drift = 0;
      for (std::size_t n = 0; n < ref.solitons.size(); ++n)
        drift = std::max(drift, std::abs(after.solitons[n].lambda -
                                         ref.solitons[n].lambda));
    }
    if (drift <= tol) return plan;
    if (attempt >= max_halvings)
      throw NumericalError("eigenvalue drift criterion not met after " +
                           std::to_string(max_halvings) + " halvings of dx");
    plan.dx /= 2;
  }
}

// ---------------------------------------------------------------------------
// Deterministic spectral evolution:  log b_n(x + L_s) = log b_n(x) - 4i
// lambda_n^2 L_s, and the same law for log rho_xi with xi^2.  Residuals are
// taken modulo 2 pi i.

struct EvolutionReport {
  std::vector<double> b_residuals;    // per matched soliton
  std::vector<double> rho_residuals;  // per matched grid point
  double max_residual = 0;
  std::vector<std::size_t> pairing;   // state_in mode -> state_out mode
};

namespace detail {

inline double mod_2pi(double x) {
  const double m = std::remainder(x, 2.0 * M_PI);
  return std::abs(m);
}

}  // namespace detail

inline std::vector<std::size_t> match_modes(const ScatteringState& a,
                                            const ScatteringState& b,
                                            double radius_factor = 0.1) {
  if (a.solitons.size() != b.solitons.size())
    throw StructuralError("mode count changed: " +
                          std::to_string(a.solitons.size()) + " vs " +
                          std::to_string(b.solitons.size()));
  const std::size_t N = a.solitons.size();
  double min_sep = 1e300;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = n + 1; m < N; ++m)
      min_sep = std::min(min_sep, std::abs(a.solitons[n].lambda -
                                           a.solitons[m].lambda));
  const double radius = N > 1 ? radius_factor * min_sep : 1e300;
  std::vector<std::size_t> pairing(N);
  std::vector<bool> used(N, false);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = N;
    double bd = 1e300;
    for (std::size_t m = 0; m < N; ++m) {
      if (used[m]) continue;
      const double d = std::abs(a.solitons[n].lambda - b.solitons[m].lambda);
      if (d < bd) {
        bd = d;
        best = m;
      }
    }
    if (best == N || bd > radius)
      throw StructuralError("no eigenvalue within matching radius of mode " +
                            std::to_string(n));
    pairing[n] = best;
    used[best] = true;
  }
  return pairing;
}

inline EvolutionReport spectral_evolution_check(const ScatteringState& in,
                                                const ScatteringState& out,
                                                double L_s) {
  EvolutionReport rep;
  rep.pairing = match_modes(in, out);
  for (std::size_t n = 0; n < in.solitons.size(); ++n) {
    const SolitonMode& mi = in.solitons[n];
    const SolitonMode& mo = out.solitons[rep.pairing[n]];
    const cdouble predicted_shift = cdouble(0, -4) * mi.lambda * mi.lambda * L_s;
    const cdouble d = std::log(mo.b) - std::log(mi.b) - predicted_shift;
    const double res = std::hypot(d.real(), detail::mod_2pi(d.imag()));
    rep.b_residuals.push_back(res);
    rep.max_residual = std::max(rep.max_residual, res);
  }
  if (in.has_continuum && out.has_continuum &&
      in.continuum.xi_grid.size() == out.continuum.xi_grid.size()) {
    for (std::size_t j = 0; j < in.continuum.xi_grid.size(); ++j) {
      const double xi = in.continuum.xi_grid[j];
      const cdouble d = std::log(out.continuum.rho[j]) -
                        std::log(in.continuum.rho[j]) +
                        cdouble(0, 4) * xi * xi * L_s;
      const double res = std::hypot(d.real(), detail::mod_2pi(d.imag()));
      rep.rho_residuals.push_back(res);
      rep.max_residual = std::max(rep.max_residual, res);
    }
  }
  return rep;
}

}  // namespace nlsft

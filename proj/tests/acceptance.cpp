// End-to-end acceptance checks for the scattering / covariance / spectral-
// efficiency pipeline.  Each check prints one PASS/FAIL line; the process
// exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlsft/covariance.hpp>
#include <nlsft/propagation.hpp>
#include <nlsft/se.hpp>
#include <nlsft/signal.hpp>
#include <nlsft/units.hpp>
#include <nlsft/zs.hpp>

using namespace nlsft;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("criterion %02d %-34s %s%s%s\n", index, name.c_str(),
              ok ? "PASS" : "FAIL", detail.empty() ? "" : "  -- ",
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void run_criterion(int index, const std::string& name,
                   const std::function<std::string()>& body) {
  try {
    report(index, name, true, body());
  } catch (const std::exception& e) {
    report(index, name, false, e.what());
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

Signal sech_pulse(double A, std::size_t M, double half_window) {
  Signal s;
  s.tau = 2.0 * half_window / static_cast<double>(M);
  s.samples.resize(M);
  for (std::size_t p = 0; p < M; ++p)
    s.samples[p] = A / std::cosh(s.t0() + static_cast<double>(p) * s.tau);
  return s;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// wrap an angle difference into (-pi, pi]
double wrap_angle(double x) { return std::remainder(x, 2.0 * M_PI); }

// ---------------------------------------------------------------------------
// 1. Known pulse spectra.

std::string crit_known_spectra() {
  const auto t0 = std::chrono::steady_clock::now();
  double max_err = 0;
  {
    const ScatteringState st = discrete_spectrum(sech_pulse(1.0, 4096, 20.0));
    require(st.solitons.size() == 1,
            "amplitude-1 pulse: expected 1 bound state, got " +
                std::to_string(st.solitons.size()));
    max_err = std::max(max_err,
                       std::abs(st.solitons[0].lambda - cdouble(0, 0.5)));
  }
  {
    const ScatteringState st = discrete_spectrum(sech_pulse(2.5, 4096, 20.0));
    require(st.solitons.size() == 2,
            "amplitude-2.5 pulse: expected 2 bound states, got " +
                std::to_string(st.solitons.size()));
    max_err = std::max(max_err,
                       std::abs(st.solitons[0].lambda - cdouble(0, 1.0)));
    max_err = std::max(max_err,
                       std::abs(st.solitons[1].lambda - cdouble(0, 2.0)));
  }
  const double dt = seconds_since(t0);
  require(max_err < 1e-3, "eigenvalue error " + fmt(max_err));
  require(dt < 30.0, "too slow: " + fmt(dt) + " s");
  return "max eigenvalue error " + fmt(max_err) + ", " + fmt(dt) + " s";
}

// ---------------------------------------------------------------------------
// 2. Gas localization lengths vs the closed form.

std::string crit_localization() {
  const auto t0 = std::chrono::steady_clock::now();
  const LocalizationReport rep =
      localization_report(64, 0.4, 1.0, 800, 1, 0.5, 2.5, 8, 20, 1.5);
  std::size_t in_bins = 0;
  double worst = 0;
  for (const auto& b : rep.bins) {
    in_bins += b.count;
    worst = std::max(worst,
                     std::abs(b.kappa_numeric - b.kappa_closed) /
                         b.kappa_closed);
  }
  const double dt = seconds_since(t0);
  require(in_bins >= 500,
          "only " + std::to_string(in_bins) + " modes in retained bins");
  require(!rep.bins.empty(), "all bins dropped");
  require(worst <= 0.10, "worst bin deviation " + fmt(worst));
  require(dt < 600.0, "too slow: " + fmt(dt) + " s");
  return std::to_string(in_bins) + " modes, worst bin deviation " +
         fmt(worst) + ", " + fmt(dt) + " s";
}

// ---------------------------------------------------------------------------
// 3. Gas density statistics.

std::string crit_gas_statistics() {
  SpectrumOptions opts;
  opts.newton_refine = false;
  std::size_t total = 0;
  double eta_sum = 0;
  const std::size_t seeds = 20, M = 64;
  for (std::size_t sd = 0; sd < seeds; ++sd) {
    const ScatteringState st =
        discrete_spectrum(generate_white_gaussian(M, 0.1, 1.0, 1 + sd), opts);
    total += st.solitons.size();
    for (const auto& m : st.solitons) eta_sum += m.lambda.imag();
  }
  const double density =
      static_cast<double>(total) / static_cast<double>(seeds * M);
  const double eta_mean = eta_sum / static_cast<double>(total);
  require(density > 0.42 && density < 0.58,
          "mode density " + fmt(density) + " outside [0.42, 0.58]");
  require(eta_mean > 0.42 && eta_mean < 0.58,
          "mean eta " + fmt(eta_mean) + " outside [0.42, 0.58]");
  return "density " + fmt(density) + ", mean eta " + fmt(eta_mean);
}

// ---------------------------------------------------------------------------
// 4. Unit-determinant Gramians along a noiseless multi-span chain.

std::string crit_unit_determinant() {
  SpectrumOptions opts;
  opts.newton_refine = false;
  opts.with_continuum = true;
  opts.dense_cap = 64;

  double worst = 0;
  {
    const Signal s0 = generate_white_gaussian(32, 0.1, 1.0, 2);
    Signal cur = s0;
    const double L_s = 0.01;
    for (int k = 1; k <= 10; ++k) {
      cur = propagate_span(cur, L_s, L_s / 1024);
      const CovarianceBlocks b = blocks_at_amplifier(scatter(cur, opts));
      worst = std::max(worst, std::abs(log_det(b.M0)) /
                                  static_cast<double>(b.dim()));
    }
  }
  {
    // continuum-only state: a weak pulse with no bound states
    SpectrumOptions o2 = opts;
    o2.dense_cap = 64;
    const ScatteringState st = scatter(sech_pulse(0.1, 64, 3.2), o2);
    require(st.solitons.empty(), "weak pulse unexpectedly carries a soliton");
    const CovarianceBlocks b = blocks_at_amplifier(st);
    worst = std::max(worst, std::abs(log_det(b.M0)) /
                                static_cast<double>(b.dim()));
  }
  require(worst <= 1e-3, "normalized log2 det " + fmt(worst) + " per dim");
  return "worst |log2 det| / dim = " + fmt(worst);
}

// ---------------------------------------------------------------------------
// 5. The drift congruence preserves the determinant at a single amplifier.

std::string crit_single_span_det() {
  SpectrumOptions opts;
  opts.newton_refine = false;
  opts.with_continuum = true;
  opts.dense_cap = 64;
  const ScatteringState st =
      scatter(generate_white_gaussian(32, 0.1, 1.0, 3), opts);
  const CovarianceBlocks b = blocks_at_amplifier(st);
  const Eigen::MatrixXcd M1 = assemble_Mk(b, gordon_haus_terms(st, 1, 1, 0.5));
  const double diff = std::abs(log_det(M1) - log_det(b.M0));
  require(diff < 1e-6, "determinant moved by " + fmt(diff));
  return "|delta log2 det| = " + fmt(diff);
}

// ---------------------------------------------------------------------------
// 6. The curvature ratio A0 cancels in the link determinant.

std::string crit_a0_cancellation() {
  SpectrumOptions opts;
  opts.newton_refine = false;
  opts.with_continuum = true;
  opts.dense_cap = 64;
  const ScatteringState st =
      scatter(generate_white_gaussian(32, 0.1, 1.0, 4), opts);
  const CovarianceBlocks b = blocks_at_amplifier(st);
  const int K = 10;
  const double L_s = 0.5, eps2 = 1e-3;
  std::vector<Eigen::MatrixXcd> with, without;
  for (int k = 1; k <= K; ++k) {
    with.push_back(assemble_Mk(b, gordon_haus_terms(st, k, K, L_s, true)));
    without.push_back(assemble_Mk(b, gordon_haus_terms(st, k, K, L_s, false)));
  }
  const double la = log_det(assemble_S(with, eps2));
  const double lb = log_det(assemble_S(without, eps2));
  const double rel = std::abs(la - lb) / std::max(1.0, std::abs(la));
  require(rel < 1e-6, "relative determinant change " + fmt(rel));
  return "relative |delta log2 det| = " + fmt(rel);
}

// ---------------------------------------------------------------------------
// 7. First-order accuracy of the data Jacobian (residual contracts ~4x).

double jacobian_residual(const Signal& s, const ScatteringState& st,
                         const Eigen::MatrixXcd& J, double eps,
                         std::uint64_t seed) {
  const std::size_t M = s.size();
  const std::size_t N = st.solitons.size();
  const std::size_t Nc = st.continuum.xi_grid.size();
  const double rt = std::sqrt(s.tau);

  const Signal noise = generate_white_gaussian(M, s.tau, 1.0, seed);
  Signal pert = s;
  Eigen::VectorXcd g(2 * M);
  for (std::size_t p = 0; p < M; ++p) {
    const cdouble du = eps * noise.samples[p];
    pert.samples[p] += du;
    g(static_cast<Eigen::Index>(p)) = rt * du;
    g(static_cast<Eigen::Index>(M + p)) = std::conj(rt * du);
  }
  // the mu rows are branch-partial derivatives; the physical shift picks up
  // the -A0 dlambda drift term that the link assembly applies as a congruence
  Eigen::VectorXcd pred = J * g;
  for (std::size_t n = 0; n < N; ++n) {
    const cdouble A0 =
        st.solitons[n].a_double_prime / st.solitons[n].a_prime;
    pred(static_cast<Eigen::Index>(2 * N + n)) -=
        A0 * pred(static_cast<Eigen::Index>(n));
    pred(static_cast<Eigen::Index>(3 * N + n)) -=
        std::conj(A0) * pred(static_cast<Eigen::Index>(N + n));
  }

  SpectrumOptions opts;
  opts.with_continuum = true;
  opts.dense_cap = M;
  ScatteringState stp = scatter(pert, opts);
  require(stp.solitons.size() == N, "perturbation changed the mode count");
  const std::vector<std::size_t> pairing = match_modes(st, stp);

  Eigen::VectorXcd meas = Eigen::VectorXcd::Zero(pred.size());
  for (std::size_t n = 0; n < N; ++n) {
    const SolitonMode& a = st.solitons[n];
    const SolitonMode& bm = stp.solitons[pairing[n]];
    const cdouble dl = bm.lambda - a.lambda;
    cdouble dm = bm.mu - a.mu;
    dm = cdouble(dm.real(), wrap_angle(dm.imag()));
    meas(static_cast<Eigen::Index>(n)) = dl;
    meas(static_cast<Eigen::Index>(N + n)) = std::conj(dl);
    meas(static_cast<Eigen::Index>(2 * N + n)) = dm;
    meas(static_cast<Eigen::Index>(3 * N + n)) = std::conj(dm);
  }
  require(stp.continuum.xi_grid.size() == Nc,
          "perturbation changed the continuum grid");
  const double dxi = M_PI / (s.tau * static_cast<double>(Nc));
  const double scale = std::sqrt(dxi / M_PI);
  for (std::size_t j = 0; j < Nc; ++j) {
    const cdouble dr = scale * (stp.continuum.rho[j] - st.continuum.rho[j]);
    meas(static_cast<Eigen::Index>(4 * N + j)) = dr;
    meas(static_cast<Eigen::Index>(4 * N + Nc + j)) = std::conj(dr);
  }
  return (meas - pred).norm();
}

std::string crit_linearization() {
  std::vector<double> ratios;
  for (const Signal& s :
       {sech_pulse(1.0, 256, 16.0), sech_pulse(5.0, 512, 16.0)}) {
    SpectrumOptions opts;
    opts.with_continuum = true;
    opts.dense_cap = s.size();
    const ScatteringState st = scatter(s, opts);
    const Eigen::MatrixXcd J = detail::jacobian_rows(st);
    const double r1 = jacobian_residual(s, st, J, 2e-3, 77);
    const double r2 = jacobian_residual(s, st, J, 1e-3, 77);
    require(r2 > 0, "vanishing residual at the smaller step");
    ratios.push_back(r1 / r2);
  }
  for (double r : ratios)
    require(r > 2.8 && r < 5.2, "contraction ratio " + fmt(r));
  return "contraction ratios " + fmt(ratios[0]) + ", " + fmt(ratios[1]);
}

// ---------------------------------------------------------------------------
// 8. Monte Carlo validation of the lambda/mu covariance block.

std::string crit_monte_carlo() {
  const auto t0 = std::chrono::steady_clock::now();
  const Signal s = sech_pulse(1.0, 128, 16.0);  // tau = 0.25
  const ScatteringState st = discrete_spectrum(s);
  require(st.solitons.size() == 1, "expected a single bound state");
  const cdouble lam0 = st.solitons[0].lambda;
  const cdouble mu0 = st.solitons[0].mu;

  const Eigen::MatrixXcd J = detail::jacobian_rows(st);  // 4 x 2M
  const double eps2 = 1e-6;
  // measured mu shifts are physical, so the branch-drift congruence that the
  // link assembly applies to the (branch-partial) mu rows is applied here too
  const cdouble A0 = st.solitons[0].a_double_prime / st.solitons[0].a_prime;
  Eigen::Matrix4cd T = Eigen::Matrix4cd::Identity();
  T(2, 0) = -A0;
  T(3, 1) = -std::conj(A0);
  const Eigen::MatrixXcd pred = eps2 * (T * (J * J.adjoint()) * T.adjoint());

  const std::size_t draws = 10000;
  Eigen::MatrixXcd emp = Eigen::MatrixXcd::Zero(4, 4);
  for (std::size_t i = 0; i < draws; ++i) {
    Signal pert = s;
    const Signal noise =
        generate_white_gaussian(s.size(), s.tau, eps2, 1000 + i);
    for (std::size_t p = 0; p < s.size(); ++p)
      pert.samples[p] += noise.samples[p];
    const cdouble lam = refine_eigenvalue(pert, lam0);
    SolitonMode m;
    m.lambda = lam;
    norming_data(pert, m);
    const cdouble dl = lam - lam0;
    cdouble dm = m.mu - mu0;
    dm = cdouble(dm.real(), wrap_angle(dm.imag()));
    Eigen::Vector4cd v;
    v << dl, std::conj(dl), dm, std::conj(dm);
    emp += v * v.adjoint();
  }
  emp /= static_cast<double>(draws);

  const double pmax = pred.cwiseAbs().maxCoeff();
  double worst = 0;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (std::abs(pred(i, j)) < 0.3 * pmax) continue;  // dominant entries
      worst = std::max(worst,
                       std::abs(emp(i, j) - pred(i, j)) / std::abs(pred(i, j)));
    }
  const double dt = seconds_since(t0);
  require(worst <= 0.10, "worst dominant-entry deviation " + fmt(worst));
  require(dt < 300.0, "too slow: " + fmt(dt) + " s");
  return std::to_string(draws) + " draws, worst deviation " + fmt(worst) +
         ", " + fmt(dt) + " s";
}

// ---------------------------------------------------------------------------
// 9. Conservation over a 20-span noiseless chain.

std::string crit_conservation() {
  SpectrumOptions opts;
  opts.newton_refine = false;
  opts.with_norming = false;
  const Signal s0 = generate_white_gaussian(64, 0.1, 1.0, 5);
  const ScatteringState before = discrete_spectrum(s0, opts);
  require(!before.solitons.empty(), "input carries no bound states");

  const double L_s = 0.01;
  Signal cur = s0;
  double worst_norm = 0;
  for (int k = 0; k < 20; ++k) {
    const double n_in = al_norm(cur);
    cur = propagate_span(cur, L_s, L_s / 2048);
    worst_norm = std::max(
        worst_norm, std::abs(al_norm(cur) - n_in) / std::abs(n_in));
  }
  const ScatteringState after = discrete_spectrum(cur, opts);
  const std::vector<std::size_t> pairing = match_modes(before, after);
  double eta_max = 0, drift = 0;
  for (std::size_t n = 0; n < before.solitons.size(); ++n) {
    eta_max = std::max(eta_max, before.solitons[n].lambda.imag());
    drift = std::max(drift, std::abs(before.solitons[n].lambda -
                                     after.solitons[pairing[n]].lambda));
  }
  require(drift <= 1e-4 * eta_max,
          "eigenvalue drift " + fmt(drift) + " vs eta_max " + fmt(eta_max));
  require(worst_norm <= 1e-8,
          "lattice-norm drift " + fmt(worst_norm) + " per span");
  return "drift " + fmt(drift / eta_max) + " * eta_max, norm drift " +
         fmt(worst_norm) + " per span";
}

// ---------------------------------------------------------------------------
// 10. Deterministic spectral evolution over several spans.

std::string crit_evolution() {
  const Signal s = sech_pulse(1.0, 1024, 10.24);  // tau = 0.02
  const ScatteringState in = discrete_spectrum(s);
  require(in.solitons.size() == 1, "expected a single bound state");
  const double L = 0.05;
  Signal cur = s;
  for (int k = 0; k < 3; ++k) cur = propagate_span(cur, L, L / 512);
  const ScatteringState out = discrete_spectrum(cur);
  const EvolutionReport rep = spectral_evolution_check(in, out, 3 * L);
  require(rep.max_residual < 1e-3, "residual " + fmt(rep.max_residual));
  return "max evolution residual " + fmt(rep.max_residual);
}

// ---------------------------------------------------------------------------
// 11/12. Capacity sweeps.

struct SweepSet {
  std::vector<SEPoint> k5, k10, k20;
  double elapsed = 0;
};

std::vector<double> grid_with_extras(std::initializer_list<double> extras) {
  std::vector<double> g;
  for (int j = 0; j <= 16; ++j) g.push_back(-17.25 + 1.75 * j);
  for (double e : extras) g.push_back(e);
  return g;
}

std::vector<SEPoint> run_sweep(int K, const std::vector<double>& grid,
                               int num_seeds) {
  SweepConfig cfg;
  cfg.params.num_spans = K;
  cfg.M = 64;
  cfg.seed = 1;
  cfg.num_seeds = num_seeds;
  cfg.power_dBm = grid;
  return se_sweep(cfg);
}

SweepSet run_all_sweeps() {
  SweepSet set;
  const auto t0 = std::chrono::steady_clock::now();
  set.k5 = run_sweep(5, grid_with_extras({12.375, 13.9375, 15.25}), 8);
  set.k10 = run_sweep(10, grid_with_extras({11.75, 13.125, 14.375}), 8);
  set.k20 = run_sweep(20, grid_with_extras({11.625, 12.0625, 12.9375}), 24);
  set.elapsed = seconds_since(t0);
  return set;
}

std::string crit_bounds(const SweepSet& set) {
  // identity calibration must be exact
  for (double eps2 : {1.0, 1e-4}) {
    NoiseCovariance nc;
    nc.S = eps2 * Eigen::MatrixXcd::Identity(10, 10);
    nc.eps2 = eps2;
    const double D = 1.75;
    const double se =
        spectral_efficiency(std::log2(M_PI * std::exp(1.0) * D), nc, 5);
    require(std::abs(se - std::log2(D / eps2)) < 1e-12,
            "identity calibration off by " + fmt(se - std::log2(D / eps2)));
  }
  // accumulated-drift variance closed form
  for (int K = 1; K <= 50; ++K) {
    const double L_s = 0.41;
    double mean = 0, sq = 0;
    for (int k = 1; k <= K; ++k) {
      const double a = 8.0 * (K - k) * L_s;
      mean += a;
      sq += a * a;
    }
    mean /= K;
    sq /= K;
    const double direct = sq - mean * mean;
    require(std::abs(zeta_K(K, L_s) - direct) <= 1e-12 * (1.0 + direct),
            "zeta closed form off at K=" + std::to_string(K));
  }
  // every sweep point must respect the linear Shannon limit
  double min_slack = 1e300;
  for (const auto* pts : {&set.k5, &set.k10, &set.k20})
    for (const auto& pt : *pts) {
      require(pt.ok, "sweep point " + fmt(pt.power_dBm) + " dBm failed: " +
                         pt.diagnostic);
      require(pt.se_full <= pt.shannon + 1e-6,
              "se_full exceeds the Shannon limit at " + fmt(pt.power_dBm) +
                  " dBm");
      min_slack = std::min(min_slack, pt.shannon - pt.se_full);
    }
  return "Shannon slack >= " + fmt(min_slack) + " bits";
}

std::string check_sweep_shape(const std::vector<SEPoint>& pts, int K,
                              double* peak_out) {
  require(!pts.empty(), "empty sweep");
  std::size_t argmax = 0;
  double lo = 1e300, hi = -1e300, gap = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    require(pts[i].ok, "point " + fmt(pts[i].power_dBm) + " dBm failed: " +
                           pts[i].diagnostic);
    if (pts[i].se_full > pts[argmax].se_full) argmax = i;
    lo = std::min(lo, pts[i].se_full);
    hi = std::max(hi, pts[i].se_full);
    gap = std::max(gap, std::abs(pts[i].se_noprop - pts[i].se_full));
    if (i > 0)
      require(pts[i].se_nogh >= pts[i - 1].se_nogh - 1e-9,
              "se_nogh decreases at " + fmt(pts[i].power_dBm) + " dBm (K=" +
                  std::to_string(K) + ")");
  }
  require(argmax > 0 && argmax + 1 < pts.size(),
          "se_full peak sits on the grid boundary (K=" + std::to_string(K) +
              ")");
  require(gap <= 0.15 * (hi - lo),
          "input-side gap " + fmt(gap) + " exceeds 15% of the se_full range " +
              fmt(hi - lo) + " (K=" + std::to_string(K) + ")");
  *peak_out = pts[argmax].se_full;
  return "peak " + fmt(pts[argmax].se_full) + " bits at " +
         fmt(pts[argmax].power_dBm) + " dBm, gap " + fmt(gap) + " of range " +
         fmt(hi - lo);
}

std::string crit_sweep_shapes(const SweepSet& set) {
  double p5 = 0, p10 = 0, p20 = 0;
  std::string d5 = check_sweep_shape(set.k5, 5, &p5);
  std::string d10 = check_sweep_shape(set.k10, 10, &p10);
  std::string d20 = check_sweep_shape(set.k20, 20, &p20);
  require(p5 > p10 && p10 > p20,
          "peaks not decreasing with distance: " + fmt(p5) + ", " + fmt(p10) +
              ", " + fmt(p20));
  require(set.elapsed < 3600.0, "too slow: " + fmt(set.elapsed) + " s");
  return "K=5 { " + d5 + " }; K=10 { " + d10 + " }; K=20 { " + d20 + " }; " +
         fmt(set.elapsed) + " s total";
}

}  // namespace

int main() {
  run_criterion(1, "known pulse spectra", crit_known_spectra);
  run_criterion(2, "gas localization lengths", crit_localization);
  run_criterion(3, "gas density statistics", crit_gas_statistics);
  run_criterion(4, "unit-determinant Gramians", crit_unit_determinant);
  run_criterion(5, "single-span det invariance", crit_single_span_det);
  run_criterion(6, "curvature-term cancellation", crit_a0_cancellation);
  run_criterion(7, "Jacobian linearization", crit_linearization);
  run_criterion(8, "Monte Carlo covariance", crit_monte_carlo);
  run_criterion(9, "multi-span conservation", crit_conservation);
  run_criterion(10, "deterministic evolution", crit_evolution);

  SweepSet set;
  bool sweeps_ok = false;
  try {
    set = run_all_sweeps();
    sweeps_ok = true;
  } catch (const std::exception& e) {
    report(11, "capacity bounds", false, e.what());
    report(12, "capacity sweep shapes", false, e.what());
  }
  if (sweeps_ok) {
    run_criterion(11, "capacity bounds",
                  [&] { return crit_bounds(set); });
    run_criterion(12, "capacity sweep shapes",
                  [&] { return crit_sweep_shapes(set); });
  }

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}

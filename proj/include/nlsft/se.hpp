#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "nlsft/covariance.hpp"
#include "nlsft/errors.hpp"
#include "nlsft/propagation.hpp"
#include "nlsft/signal.hpp"
#include "nlsft/units.hpp"
#include "nlsft/zs.hpp"

namespace nlsft {

// Entropies, spectral-efficiency values and bounds computed from the
// scattering-domain noise covariance, plus the closed-form inverse
// localization length and the power-sweep engine.

/// Differential entropy of a circular complex Gaussian with covariance S:
/// h_G = 1/2 log2 det S + M_dof log2(pi e).  The overall scale convention of
/// S is fixed by the linear-limit calibration (unit-determinant per-amplifier
/// blocks), so S = K eps2 I gives M_dof log2(K eps2 pi e).
inline double gaussian_entropy(const NoiseCovariance& nc, std::size_t M_dof) {
  return 0.5 * log_det(nc) +
         static_cast<double>(M_dof) * std::log2(M_PI * std::exp(1.0));
}

/// SE = h(U)/dof - h_G/dof with Gaussian input, h(U)/dof = log2(pi e D).
inline double spectral_efficiency(double h_U_per_dof,
                                  const NoiseCovariance& nc,
                                  std::size_t M_dof) {
  if (M_dof == 0) throw ParameterError("zero scattering degrees of freedom");
  return h_U_per_dof - gaussian_entropy(nc, M_dof) / static_cast<double>(M_dof);
}

/// Linear Shannon limit log2 SNR = log2 [P / (K sigma^2 B)].
inline double shannon_upper_bound(const PhysicalParams& p) {
  return std::log2(snr(p));
}

/// Jensen/Minkowski lower bound from the per-amplifier average covariance:
/// 1/2 log2 SNR - (1/dim) log2 det( (1/K) sum E[M_k] ).
inline double jensen_minkowski_lower_bound(const Eigen::MatrixXcd& avg_Mk,
                                           const PhysicalParams& p) {
  if (avg_Mk.rows() == 0) throw ParameterError("empty averaged covariance");
  return 0.5 * std::log2(snr(p)) -
         log_det(avg_Mk) / static_cast<double>(avg_Mk.rows());
}

/// Inverse localization length of a bound state with Im lambda = eta in the
/// white Gaussian ensemble of per-mode variance D:
/// kappa = (D/2) [ (2 eta / D) coth(2 eta / D) - 1 ], kappa(0) = 0.
inline double kappa_closed_form(double eta, double D) {
  if (eta < 0) throw ParameterError("eta must be non-negative");
  if (!(D > 0)) throw ParameterError("D must be positive");
  const double x = 2.0 * eta / D;
  if (x < 1e-6) return D * x * x / 6.0;  // x coth x = 1 + x^2/3 + O(x^4)
  return 0.5 * D * (x / std::tanh(x) - 1.0);
}

// ---------------------------------------------------------------------------
// Localization-length aggregation (inverse decay rate vs eta, binned).

struct LocalizationBin {
  double eta_center = 0;
  double kappa_numeric = 0;
  double kappa_closed = 0;
  std::size_t count = 0;
};

struct LocalizationReport {
  std::vector<LocalizationBin> bins;  // retained bins only
  std::size_t total_modes = 0;
  std::size_t dropped_bins = 0;
  std::size_t fit_failures = 0;
};

/// Gaussian-ensemble localization study: scatter `seeds` independent white
/// inputs, fit the tail decay of every bound state with eta in
/// [eta_lo, eta_hi], and average per bin.  Bins with fewer than min_count
/// modes are dropped (counted, not reported).
inline LocalizationReport localization_report(
    std::size_t M, double tau, double D, std::size_t seeds,
    std::uint64_t seed0, double eta_lo = 0.5, double eta_hi = 2.5,
    std::size_t num_bins = 8, std::size_t min_count = 20,
    double min_depth = 1.5) {
  if (!(eta_hi > eta_lo) || num_bins == 0)
    throw ParameterError("bad localization bin range");
  LocalizationReport rep;
  std::vector<double> sum(num_bins, 0);
  std::vector<std::size_t> cnt(num_bins, 0);
  SpectrumOptions opts;
  opts.newton_refine = false;  // raw lattice spectrum: gas statistics
  opts.dense_cap = std::max<std::size_t>(opts.dense_cap, M);
  for (std::size_t sd = 0; sd < seeds; ++sd) {
    const Signal s = generate_white_gaussian(M, tau, D, seed0 + sd);
    const ScatteringState st = scatter(s, opts);
    rep.total_modes += st.solitons.size();
    for (const auto& m : st.solitons) {
      const double eta = m.lambda.imag();
      if (eta < eta_lo || eta > eta_hi) continue;
      double kappa;
      try {
        kappa = localization_length_estimate(m, tau, min_depth);
      } catch (const std::exception&) {
        ++rep.fit_failures;
        continue;
      }
      std::size_t b = static_cast<std::size_t>((eta - eta_lo) /
                                               (eta_hi - eta_lo) *
                                               static_cast<double>(num_bins));
      if (b >= num_bins) b = num_bins - 1;
      sum[b] += kappa;
      ++cnt[b];
    }
  }
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (cnt[b] < min_count) {
      ++rep.dropped_bins;
      continue;
    }
    LocalizationBin bin;
    bin.eta_center =
        eta_lo + (static_cast<double>(b) + 0.5) * (eta_hi - eta_lo) /
                     static_cast<double>(num_bins);
    bin.kappa_numeric = sum[b] / static_cast<double>(cnt[b]);
    bin.kappa_closed = kappa_closed_form(bin.eta_center, D);
    bin.count = cnt[b];
    rep.bins.push_back(bin);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Power sweep.

struct SEPoint {
  double snr_db = 0;
  double power_dBm = 0;
  double se_full = 0, se_nogh = 0, se_noprop = 0;  // bits per complex d.o.f.
  double shannon = 0;
  bool bts_valid = false;
  std::uint64_t seed = 0;
  int K = 0;
  std::size_t M = 0;
  bool ok = false;
  std::string diagnostic;  // set when !ok
};

struct SweepConfig {
  PhysicalParams params;          // power_W overridden per grid point
  std::vector<double> power_dBm;  // strictly increasing
  std::size_t M = 64;
  std::uint64_t seed = 1;
  bool with_full = true, with_nogh = true, with_noprop = true;
  int steps_per_span = 16;
  int num_seeds = 1;  // >1 averages the SE values over consecutive seeds
  int workers = 1;
  bool fault_injection = false;

  void validate() const {
    if (power_dBm.empty()) throw ParameterError("empty power grid");
    for (std::size_t i = 1; i < power_dBm.size(); ++i)
      if (!(power_dBm[i] > power_dBm[i - 1]))
        throw ParameterError("power grid must be strictly increasing");
    if (M < 8) throw ParameterError("M must be >= 8");
    if (!with_full && !with_nogh && !with_noprop)
      throw ParameterError("at least one variant must be enabled");
    if (steps_per_span < 1) throw ParameterError("steps_per_span must be >= 1");
    if (num_seeds < 1) throw ParameterError("num_seeds must be >= 1");
    if (workers < 1) throw ParameterError("workers must be >= 1");
  }
};

namespace detail {

// permute b's modes into a's order (eigenvalues are conserved by the
// noiseless integrable flow, so nearest-eigenvalue matching is exact)
inline ScatteringState reorder_like(const ScatteringState& a,
                                    ScatteringState b) {
  const std::vector<std::size_t> pairing = match_modes(a, b);
  std::vector<SolitonMode> perm(b.solitons.size());
  for (std::size_t n = 0; n < pairing.size(); ++n)
    perm[n] = std::move(b.solitons[pairing[n]]);
  b.solitons = std::move(perm);
  return b;
}

}  // namespace detail

/// One sweep point: linearize the scattering map around the noiseless
/// trajectory at every amplifier and assemble the enabled covariance
/// variants.  Throws on failure; se_sweep converts that to a diagnostic.
inline SEPoint se_point(const SweepConfig& cfg, double dBm) {
  SEPoint pt;
  pt.power_dBm = dBm;
  pt.seed = cfg.seed;
  pt.M = cfg.M;

  PhysicalParams p = cfg.params;
  p.power_W = 1e-3 * std::pow(10.0, dBm / 10.0);
  const ChannelScales sc = derive_scales_symbols(p, static_cast<int>(cfg.M));
  const int K = p.num_spans;
  pt.K = K;
  pt.snr_db = 10.0 * std::log10(snr(p));
  pt.shannon = shannon_upper_bound(p);
  pt.bts_valid = validity_flag(sc);

  SpectrumOptions opts;
  opts.newton_refine = false;  // self-consistent lattice scattering data
  opts.with_continuum = true;
  opts.dense_cap = std::max<std::size_t>(opts.dense_cap, cfg.M);

  const Signal s0 = generate_white_gaussian(cfg.M, sc.tau, sc.D, cfg.seed);
  const ScatteringState state0 = scatter(s0, opts);
  const std::size_t dof = 2 * state0.solitons.size() +
                          state0.continuum.xi_grid.size();
  if (dof == 0) throw NumericalError("no scattering degrees of freedom");
  const double h_U = std::log2(M_PI * std::exp(1.0) * sc.D);

  std::vector<Eigen::MatrixXcd> Mks;
  std::vector<CovarianceBlocks> blks;
  const Eigen::VectorXd ref_norms = jacobian_row_norms(state0);
  Signal cur = s0;
  double umax2 = 0;
  for (const auto& u : s0.samples) umax2 = std::max(umax2, std::norm(u));
  for (int k = 1; k <= K; ++k) {
    // initial step bounded by the nonlinear rotation rate; the conserved-norm
    // guard inside propagate_span drives further halving when needed
    double dx = std::min(sc.L_s / cfg.steps_per_span, 0.2 / (umax2 + 1.0));
    for (int attempt = 0;; ++attempt) {
      try {
        cur = propagate_span(cur, sc.L_s, dx, cfg.fault_injection);
        break;
      } catch (const NumericalError&) {
        // injected faults must surface instead of being stepped around
        if (attempt >= 12 || cfg.fault_injection) throw;
        dx /= 2;
      }
    }
    const ScatteringState sk = detail::reorder_like(state0, scatter(cur, opts));
    const CovarianceBlocks b = blocks_at_amplifier(sk, &ref_norms);
    // lambda_n and a''/a' are scattering invariants, so the drift terms are
    // taken from the input state: a k-independent A0 then cancels exactly in
    // det S (it factors out as one more unit-determinant congruence)
    if (cfg.with_full)
      Mks.push_back(assemble_Mk(b, gordon_haus_terms(state0, k, K, sc.L_s)));
    blks.push_back(b);
  }

  if (cfg.with_full)
    pt.se_full = spectral_efficiency(h_U, assemble_S(Mks, sc.eps2), dof);
  if (cfg.with_nogh)
    pt.se_nogh = spectral_efficiency(h_U, assemble_S_noGH(blks, sc.eps2), dof);
  if (cfg.with_noprop)
    pt.se_noprop = spectral_efficiency(
        h_U, assemble_S_noProp(state0, K, sc.L_s, sc.eps2), dof);
  pt.ok = true;
  return pt;
}

/// One grid point, averaged over cfg.num_seeds consecutive seeds.  A point
/// succeeds if at least half of its realizations do; failed realizations are
/// dropped from the average and their messages joined into the diagnostic.
inline SEPoint se_point_averaged(const SweepConfig& cfg, double dBm) {
  SEPoint avg;
  avg.power_dBm = dBm;
  avg.seed = cfg.seed;
  avg.M = cfg.M;
  avg.K = cfg.params.num_spans;
  avg.se_full = avg.se_nogh = avg.se_noprop = 0;
  int good = 0;
  for (int i = 0; i < cfg.num_seeds; ++i) {
    SweepConfig one = cfg;
    one.seed = cfg.seed + static_cast<std::uint64_t>(i);
    try {
      const SEPoint pt = se_point(one, dBm);
      avg.snr_db = pt.snr_db;
      avg.shannon = pt.shannon;
      avg.bts_valid = pt.bts_valid;
      avg.se_full += pt.se_full;
      avg.se_nogh += pt.se_nogh;
      avg.se_noprop += pt.se_noprop;
      ++good;
    } catch (const std::exception& e) {
      if (!avg.diagnostic.empty()) avg.diagnostic += "; ";
      avg.diagnostic += e.what();
    }
  }
  if (2 * good >= cfg.num_seeds && good > 0) {
    avg.se_full /= good;
    avg.se_nogh /= good;
    avg.se_noprop /= good;
    avg.ok = true;
  }
  return avg;
}

inline std::vector<SEPoint> se_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<SEPoint> out(cfg.power_dBm.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < out.size();
         i = next.fetch_add(1))
      out[i] = se_point_averaged(cfg, cfg.power_dBm[i]);
  };
  const std::size_t n =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), out.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV writers.  Every file opens with a traceability header block.

inline void write_artifact_header(std::ostream& os, std::uint64_t config_hash,
                                  std::uint64_t seed) {
  os << "# nlsft v1\n";
  os << "# config_hash " << std::hex << config_hash << std::dec << "\n";
  os << "# seed " << seed << "\n";
}

inline void write_se_csv(std::ostream& os, const std::vector<SEPoint>& points,
                         std::uint64_t config_hash, std::uint64_t seed,
                         const SweepConfig& cfg) {
  write_artifact_header(os, config_hash, seed);
  os << "snr_db,power_dBm,se_full,se_nogh,se_noprop,shannon,bts_valid,K,M,seed"
     << "\n";
  os << std::setprecision(9);
  for (const auto& pt : points) {
    if (!pt.ok) continue;
    os << pt.snr_db << "," << pt.power_dBm << ",";
    if (cfg.with_full) os << pt.se_full;
    os << ",";
    if (cfg.with_nogh) os << pt.se_nogh;
    os << ",";
    if (cfg.with_noprop) os << pt.se_noprop;
    os << "," << pt.shannon << "," << (pt.bts_valid ? 1 : 0) << "," << pt.K
       << "," << pt.M << "," << pt.seed << "\n";
  }
}

inline void write_fig1_csv(std::ostream& os, const LocalizationReport& rep,
                           std::uint64_t config_hash, std::uint64_t seed) {
  write_artifact_header(os, config_hash, seed);
  os << "eta,kappa_numeric,kappa_closed_form,count\n";
  os << std::setprecision(9);
  for (const auto& b : rep.bins)
    os << b.eta_center << "," << b.kappa_numeric << "," << b.kappa_closed
       << "," << b.count << "\n";
}

}  // namespace nlsft

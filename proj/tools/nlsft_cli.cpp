// Batch experiment runner: seeded sweeps and one-shot transforms with CSV
// artifacts.  Subcommands: selftest, fig1, fig2, scatter, covariance.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
// 3 partial sweep (some grid points failed).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlsft/config.hpp>
#include <nlsft/covariance.hpp>
#include <nlsft/errors.hpp>
#include <nlsft/propagation.hpp>
#include <nlsft/se.hpp>
#include <nlsft/signal.hpp>
#include <nlsft/units.hpp>
#include <nlsft/zs.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitPartial = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int workers = 1;
  std::vector<std::string> variants;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "flat key=value config file");
  cmd->add_option("--seed", a.seed, "base RNG seed");
  cmd->add_option("--workers", a.workers, "parallel workers for grid points");
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--variant", a.variants,
                  "covariance variant: full|nogh|noprop (repeatable)");
}

nlsft::Config load_config(const CommonArgs& a) {
  if (a.config_path.empty()) return nlsft::Config();
  return nlsft::Config::parse_file(a.config_path);
}

std::vector<double> power_grid_from_config(const nlsft::Config& c) {
  std::vector<double> grid;
  if (c.has("power_dBm_list")) {
    std::stringstream ss(c.get_string("power_dBm_list"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      grid.push_back(std::stod(tok));
    }
  } else if (c.has("power_dBm_min")) {
    const double lo = c.get_double("power_dBm_min");
    const double hi = c.get_double("power_dBm_max");
    const double step = c.get_double("power_dBm_step", 1.0);
    if (!(step > 0)) throw nlsft::ParameterError("power_dBm_step must be > 0");
    for (double p = lo; p <= hi + 1e-12; p += step) grid.push_back(p);
  }
  if (grid.empty())
    throw nlsft::ParameterError(
        "empty power grid: set power_dBm_list or power_dBm_min/max/step");
  return grid;
}

void apply_variant_toggles(nlsft::SweepConfig& cfg, const nlsft::Config& c,
                           const std::vector<std::string>& cli_variants) {
  if (!cli_variants.empty()) {
    cfg.with_full = cfg.with_nogh = cfg.with_noprop = false;
    for (const std::string& v : cli_variants) {
      if (v == "full") cfg.with_full = true;
      else if (v == "nogh") cfg.with_nogh = true;
      else if (v == "noprop") cfg.with_noprop = true;
      else throw nlsft::ParameterError("unknown variant '" + v + "'");
    }
  } else {
    cfg.with_full = c.get_long("variant_full", 1) != 0;
    cfg.with_nogh = c.get_long("variant_nogh", 1) != 0;
    cfg.with_noprop = c.get_long("variant_noprop", 1) != 0;
  }
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name;
  std::ofstream os(path);
  if (!os) throw nlsft::ParameterError("cannot open output file " + path);
  return os;
}

// ---------------------------------------------------------------------------

int run_fig1(const CommonArgs& a) {
  const nlsft::Config c = load_config(a);
  const std::size_t M = static_cast<std::size_t>(c.get_long("fig1_M", 64));
  const double tau = c.get_double("fig1_tau", 0.4);
  const double D = c.get_double("fig1_D", 1.0);
  const std::size_t seeds =
      static_cast<std::size_t>(c.get_long("fig1_seeds", 800));
  const double eta_lo = c.get_double("fig1_eta_lo", 0.5);
  const double eta_hi = c.get_double("fig1_eta_hi", 2.5);
  const std::size_t bins =
      static_cast<std::size_t>(c.get_long("fig1_bins", 8));
  const std::size_t min_count =
      static_cast<std::size_t>(c.get_long("fig1_min_count", 20));
  const double min_depth = c.get_double("fig1_min_depth", 1.5);

  const nlsft::LocalizationReport rep = nlsft::localization_report(
      M, tau, D, seeds, a.seed, eta_lo, eta_hi, bins, min_count, min_depth);
  if (rep.dropped_bins > 0)
    std::cerr << "warning: " << rep.dropped_bins
              << " bin(s) dropped for insufficient mode count\n";
  std::ofstream os = open_out(a.out_dir, "fig1.csv");
  nlsft::write_fig1_csv(os, rep, c.hash(), a.seed);
  std::cout << "fig1: " << rep.bins.size() << " bins, " << rep.total_modes
            << " modes aggregated\n";
  return kExitOk;
}

int run_fig2(const CommonArgs& a) {
  const nlsft::Config c = load_config(a);
  nlsft::PhysicalParams base = nlsft::params_from_config(c);

  std::vector<int> spans_list;
  {
    std::stringstream ss(c.get_string("spans_list", "5,10,20"));
    std::string tok;
    while (std::getline(ss, tok, ',')) spans_list.push_back(std::stoi(tok));
  }
  if (spans_list.empty())
    throw nlsft::ParameterError("spans_list must name at least one distance");

  nlsft::SweepConfig cfg;
  cfg.power_dBm = power_grid_from_config(c);
  cfg.M = static_cast<std::size_t>(c.get_long("M", 64));
  cfg.seed = a.seed;
  cfg.num_seeds = static_cast<int>(c.get_long("seeds", 1));
  cfg.workers = a.workers;
  cfg.steps_per_span = static_cast<int>(c.get_long("steps_per_span", 16));
  apply_variant_toggles(cfg, c, a.variants);
  const bool emit_snapshots = c.get_long("emit_snapshots", 0) != 0;

  std::size_t failed = 0, total = 0;
  std::vector<double> peak_se;
  for (int K : spans_list) {
    cfg.params = base;
    cfg.params.num_spans = K;
    cfg.validate();
    const std::vector<nlsft::SEPoint> pts = nlsft::se_sweep(cfg);

    const long km = std::lround(K * cfg.params.span_km);
    const std::string stem = "fig2_" + std::to_string(km) + "km";
    std::ofstream os = open_out(a.out_dir, stem + ".csv");
    nlsft::write_se_csv(os, pts, c.hash(), a.seed, cfg);

    std::ofstream diag = open_out(a.out_dir, stem + ".diag.txt");
    nlsft::write_artifact_header(diag, c.hash(), a.seed);
    double peak = -1e300;
    for (const auto& pt : pts) {
      ++total;
      if (!pt.ok) {
        ++failed;
        diag << "point " << pt.power_dBm << " dBm: " << pt.diagnostic << "\n";
      } else {
        peak = std::max(peak, pt.se_full);
      }
      if (emit_snapshots && pt.ok) {
        nlsft::PhysicalParams pp = cfg.params;
        pp.power_W = 1e-3 * std::pow(10.0, pt.power_dBm / 10.0);
        const nlsft::ChannelScales sc =
            nlsft::derive_scales_symbols(pp, static_cast<int>(cfg.M));
        std::ostringstream name;
        name << stem << "_input_" << pt.power_dBm << "dBm.sig";
        nlsft::save_signal(
            nlsft::generate_white_gaussian(cfg.M, sc.tau, sc.D, cfg.seed),
            a.out_dir + "/" + name.str());
      }
    }
    peak_se.push_back(peak);
    std::cout << stem << ": " << pts.size() << " points, peak se_full "
              << peak << "\n";
  }
  if (failed == 0) return kExitOk;
  std::cerr << failed << "/" << total << " grid points failed\n";
  return kExitPartial;
}

int run_scatter(const CommonArgs& a, const std::string& input,
                bool with_eigenfunctions) {
  const nlsft::Config c = load_config(a);
  const nlsft::Signal s = nlsft::load_signal(input);
  nlsft::SpectrumOptions opts;
  opts.newton_refine = c.get_long("newton_refine", 1) != 0;
  opts.with_continuum = c.get_long("with_continuum", 1) != 0;
  opts.dense_cap =
      std::max<std::size_t>(opts.dense_cap, s.samples.size());
  const nlsft::ScatteringState st = nlsft::scatter(s, opts);
  std::ofstream os = open_out(a.out_dir, "scattering.txt");
  nlsft::write_artifact_header(os, c.hash(), a.seed);
  nlsft::save_scattering(st, os, with_eigenfunctions);
  std::cout << "scatter: " << st.solitons.size() << " bound states, "
            << st.continuum.xi_grid.size() << " continuum points\n";
  return kExitOk;
}

int run_covariance(const CommonArgs& a, const std::string& input) {
  const nlsft::Config c = load_config(a);
  const nlsft::PhysicalParams p = nlsft::params_from_config(c);
  const nlsft::Signal s = nlsft::load_signal(input);
  nlsft::SpectrumOptions opts;
  opts.newton_refine = c.get_long("newton_refine", 1) != 0;
  opts.with_continuum = c.get_long("with_continuum", 1) != 0;
  opts.dense_cap =
      std::max<std::size_t>(opts.dense_cap, s.samples.size());
  const nlsft::ScatteringState st = nlsft::scatter(s, opts);
  const nlsft::CovarianceBlocks b = nlsft::blocks_at_amplifier(st);
  const double eps2 =
      c.has("eps2") ? c.get_double("eps2")
                    : nlsft::derive_scales_symbols(
                          p, static_cast<int>(s.samples.size()))
                          .eps2;
  const nlsft::NoiseCovariance S = nlsft::assemble_S_noGH({b}, eps2);
  std::ofstream os = open_out(a.out_dir, "covariance.txt");
  nlsft::write_artifact_header(os, c.hash(), a.seed);
  nlsft::save_covariance(os, S);
  std::cout << "covariance: dim " << S.S.rows() << ", log2 det "
            << nlsft::log_det(S) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Self test: one small invariant suite per module, one verdict line each.

struct Suite {
  std::string name;
  bool passed = false;
  std::string detail;
};

int run_selftest(bool fault_injection) {
  using namespace nlsft;
  std::vector<Suite> suites;
  auto run = [&](const std::string& name, auto&& body) {
    Suite s;
    s.name = name;
    try {
      body();
      s.passed = true;
    } catch (const std::exception& e) {
      s.detail = e.what();
    }
    suites.push_back(std::move(s));
  };

  run("units", [] {
    PhysicalParams p;
    const ChannelScales sc = derive_scales_symbols(p, 64);
    if (!(sc.tau > 0 && sc.L_s > 0 && sc.eps2 > 0))
      throw NumericalError("scale derivation produced nonpositive scales");
    if (std::abs(sc.D - 1.0) > 1e-12)
      throw NumericalError("per-mode variance convention violated");
    if (!(snr(p) > 0)) throw NumericalError("SNR must be positive");
  });

  run("signal", [] {
    const Signal s = generate_white_gaussian(2048, 0.1, 1.0, 7);
    double var = 0;
    for (const auto& u : s.samples) var += std::norm(u);
    var /= static_cast<double>(s.samples.size());
    if (std::abs(var - 1.0 / 0.1) > 1.0)
      throw NumericalError("white input variance off: " + std::to_string(var));
    std::stringstream buf;
    save_signal(s, buf);
    const Signal t = load_signal(buf);
    if (t.samples.size() != s.samples.size())
      throw NumericalError("save/load roundtrip changed length");
  });

  run("zs_scattering", [] {
    const std::size_t M = 1024;
    const double T = 40.0, tau = T / M;
    Signal s;
    s.tau = tau;
    s.samples.resize(M);
    for (std::size_t p = 0; p < M; ++p) {
      const double t = -T / 2 + (static_cast<double>(p) + 0.5) * tau;
      s.samples[p] = 1.0 / std::cosh(t);
    }
    SpectrumOptions o;
    o.dense_cap = M;
    const ScatteringState st = scatter(s, o);
    if (st.solitons.size() != 1)
      throw NumericalError("sech must carry exactly one bound state");
    if (std::abs(st.solitons[0].lambda - cdouble(0, 0.5)) > 1e-3)
      throw NumericalError("sech eigenvalue off i/2");
  });

  run("propagation", [fault_injection] {
    const double tau = 0.1;
    const Signal s = generate_white_gaussian(64, tau, 1.0, 3);
    SpectrumOptions o;
    o.newton_refine = false;
    o.with_norming = false;
    o.dense_cap = 64;
    const ScatteringState before = scatter(s, o);
    Signal cur = s;
    for (int k = 0; k < 4; ++k)
      cur = propagate_span(cur, 0.01, 1.25e-4, fault_injection, 1e-4);
    const ScatteringState after = scatter(cur, o);
    const std::vector<std::size_t> pairing = match_modes(before, after);
    double max_eta = 1e-30, drift = 0;
    for (std::size_t n = 0; n < pairing.size(); ++n) {
      max_eta = std::max(max_eta, before.solitons[n].lambda.imag());
      drift = std::max(drift, std::abs(before.solitons[n].lambda -
                                       after.solitons[pairing[n]].lambda));
    }
    if (drift > 1e-4 * max_eta)
      throw NumericalError("eigenvalue drift " + std::to_string(drift) +
                           " exceeds budget");
  });

  run("covariance", [] {
    const Signal s = generate_white_gaussian(32, 0.1, 1.0, 5);
    SpectrumOptions o;
    o.newton_refine = false;
    o.with_continuum = true;
    o.dense_cap = 64;
    const ScatteringState st = scatter(s, o);
    const CovarianceBlocks b = blocks_at_amplifier(st);
    Eigen::LDLT<Eigen::MatrixXcd> f(b.M0);
    const double logdet = f.vectorD().real().array().log().sum();
    if (std::abs(logdet) > 1e-6)
      throw NumericalError("canonical Gramian determinant not unity");
    const Eigen::MatrixXcd Mk =
        assemble_Mk(b, gordon_haus_terms(st, 1, 1, 0.01));
    Eigen::LDLT<Eigen::MatrixXcd> g(Mk);
    const double logdet1 = g.vectorD().real().array().log().sum();
    if (std::abs(logdet1 - logdet) > 1e-6)
      throw NumericalError("single-amplifier drift congruence changed det");
  });

  run("se_analysis", [] {
    PhysicalParams p;
    const double target = std::log2(snr(p));
    const double eps2 = p.sigma2_J() * p.bandwidth_Hz / p.power_W;
    NoiseCovariance nc;
    nc.S = (p.num_spans * eps2) * Eigen::MatrixXcd::Identity(64, 64);
    nc.eps2 = eps2;
    const double se =
        spectral_efficiency(std::log2(M_PI * std::exp(1.0)), nc, 32);
    if (std::abs(se - target) > 1e-9)
      throw NumericalError("identity-covariance calibration off");
    for (int K = 1; K <= 50; ++K) {
      double mean = 0, sq = 0;
      for (int k = 1; k <= K; ++k) {
        const double a = 8.0 * (K - k) * 0.37;
        mean += a;
        sq += a * a;
      }
      mean /= K;
      sq /= K;
      if (std::abs(zeta_K(K, 0.37) - (sq - mean * mean)) > 1e-9)
        throw NumericalError("zeta_K closed form mismatch at K=" +
                             std::to_string(K));
    }
  });

  run("cli_config", [] {
    std::istringstream is("power_dBm_list = 0,1\nM = 64\n");
    const Config c = Config::parse(is);
    std::istringstream round(c.canonical());
    if (c.hash() != Config::parse(round).hash())
      throw StructuralError("config hash not canonical");
    if (c.get_long("M") != 64)
      throw StructuralError("config integer parse failed");
  });

  bool all = true;
  for (const auto& s : suites) {
    std::cout << "suite " << s.name << ": " << (s.passed ? "PASS" : "FAIL");
    if (!s.passed) std::cout << "  (" << s.detail << ")";
    std::cout << "\n";
    all = all && s.passed;
  }
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonlinear Fourier channel analysis toolkit"};
  app.require_subcommand(1);

  CommonArgs a;
  bool fault_injection = false;
  bool with_eigenfunctions = false;
  std::string input_path;

  CLI::App* selftest = app.add_subcommand("selftest", "run module suites");
  selftest->add_flag("--fault-injection", fault_injection,
                     "corrupt the integrator step to exercise drift checks");

  CLI::App* fig1 = app.add_subcommand("fig1", "localization-length study");
  add_common(fig1, a);

  CLI::App* fig2 = app.add_subcommand("fig2", "spectral-efficiency sweep");
  add_common(fig2, a);

  CLI::App* scatter_cmd =
      app.add_subcommand("scatter", "one-shot transform of a signal file");
  add_common(scatter_cmd, a);
  scatter_cmd->add_option("input", input_path, "signal file")->required();
  scatter_cmd->add_flag("--eigenfunctions", with_eigenfunctions,
                        "include eigenfunctions in the dump");

  CLI::App* cov_cmd =
      app.add_subcommand("covariance", "one-shot covariance dump");
  add_common(cov_cmd, a);
  cov_cmd->add_option("input", input_path, "signal file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (selftest->parsed()) return run_selftest(fault_injection);
    if (fig1->parsed()) return run_fig1(a);
    if (fig2->parsed()) return run_fig2(a);
    if (scatter_cmd->parsed())
      return run_scatter(a, input_path, with_eigenfunctions);
    if (cov_cmd->parsed()) return run_covariance(a, input_path);
  } catch (const nlsft::ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlsft/errors.hpp"
#include "nlsft/rng.hpp"

namespace nlsft {

using cdouble = std::complex<double>;

/// Uniformly sampled complex envelope u(t) at one propagation position.
/// Sample p lives at t_p = t0() + p*tau; the window is centered on t = 0.
struct Signal {
  std::vector<cdouble> samples;
  double tau = 0;
  double position_x = 0;

  std::size_t size() const { return samples.size(); }
  double t0() const { return -0.5 * tau * static_cast<double>(samples.size()); }
  double t_at(std::size_t p) const { return t0() + tau * static_cast<double>(p); }

  void validate() const {
    if (samples.size() < 2) throw ParameterError("signal needs M >= 2 samples");
    if (!(tau > 0)) throw ParameterError("sample step must be positive");
    for (const auto& u : samples)
      if (!std::isfinite(u.real()) || !std::isfinite(u.imag()))
        throw ParameterError("signal contains non-finite samples");
  }
};

/// i.i.d. circular complex Gaussian samples with per-sample variance D/tau,
/// so that E[sum |u_p|^2 tau] = M*D.  Deterministic given (seed, stream).
inline Signal generate_white_gaussian(std::size_t M, double tau, double D,
                                      std::uint64_t seed, std::uint64_t stream = 0) {
  if (M < 2) throw ParameterError("M must be >= 2");
  if (!(tau > 0)) throw ParameterError("tau must be positive");
  if (D < 0) throw ParameterError("variance must be non-negative");
  Signal s;
  s.tau = tau;
  s.samples.resize(M);
  SplitStream rng(seed, stream);
  const double var = D / tau;
  for (auto& u : s.samples) u = rng.next_complex_gaussian(var);
  return s;
}

/// sum |u_p|^2 tau  (rectangle rule, consistent with the lattice quadrature).
inline double energy(const Signal& s) {
  double e = 0;
  for (const auto& u : s.samples) e += std::norm(u);
  return e * s.tau;
}

/// delta_Q(t) = Q sinc(Q t), the hard-bandlimit kernel; value Q at t = 0.
inline double sinc_kernel(double Q, double t) {
  if (!(Q > 0)) throw ParameterError("bandwidth must be positive");
  const double x = Q * t;
  if (std::abs(x) < 1e-8) return Q * (1.0 - x * x / 6.0);
  return Q * std::sin(x) / x;
}

/// (1/M) sum_p u_{p+lag} conj(u_p), periodic wraparound.  Statistical
/// validation helper only.
inline cdouble empirical_correlation(const Signal& s, long lag) {
  const long M = static_cast<long>(s.samples.size());
  if (std::abs(lag) >= M) throw ParameterError("lag out of range");
  cdouble acc = 0;
  for (long p = 0; p < M; ++p)
    acc += s.samples[static_cast<std::size_t>(((p + lag) % M + M) % M)] *
           std::conj(s.samples[static_cast<std::size_t>(p)]);
  return acc / static_cast<double>(M);
}

// --- serialization: text table of (index, re, im) under a small header ---

inline void save_signal(const Signal& s, std::ostream& os) {
  os.precision(17);
  os << "nlsft-signal v1\n";
  os << "M " << s.samples.size() << "\n";
  os << "tau " << s.tau << "\n";
  os << "position_x " << s.position_x << "\n";
  for (std::size_t p = 0; p < s.samples.size(); ++p)
    os << p << " " << s.samples[p].real() << " " << s.samples[p].imag() << "\n";
}

inline void save_signal(const Signal& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParameterError("cannot open " + path + " for writing");
  save_signal(s, os);
}

inline Signal load_signal(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "nlsft-signal v1")
    throw ParameterError("bad signal file header");
  Signal s;
  std::size_t M = 0;
  std::string key;
  is >> key >> M;
  if (key != "M") throw ParameterError("bad signal header: expected M");
  is >> key >> s.tau;
  if (key != "tau") throw ParameterError("bad signal header: expected tau");
  is >> key >> s.position_x;
  if (key != "position_x") throw ParameterError("bad signal header: expected position_x");
  s.samples.resize(M);
  for (std::size_t p = 0; p < M; ++p) {
    std::size_t idx;
    double re, im;
    if (!(is >> idx >> re >> im) || idx != p)
      throw ParameterError("truncated or misordered signal table");
    s.samples[p] = {re, im};
  }
  s.validate();
  return s;
}

inline Signal load_signal(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("cannot open " + path);
  return load_signal(is);
}

}  // namespace nlsft

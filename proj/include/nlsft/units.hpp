#pragma once

#include <cmath>

#include "nlsft/errors.hpp"

namespace nlsft {

/// Dimensional fiber/system constants.  Units are stated per field; the
/// conversion to the normalized propagation equation happens in
/// derive_scales().
struct PhysicalParams {
  double beta2_ps2_per_km = 21.67;   // group-velocity dispersion
  double gamma_per_W_km = 1.27;      // Kerr coefficient
  double bandwidth_Hz = 100e9;       // signal/noise bandwidth B
  double span_km = 100.0;            // amplifier spacing L
  int num_spans = 20;                // K
  double n_sp = 1.0;                 // emission factor
  double photon_energy_J = 13.2e-20; // E_ph
  double alpha_loss_dB_per_km = 0.2; // attenuation
  double power_W = 1e-3;             // average input power P

  void validate() const {
    if (!(beta2_ps2_per_km > 0) || !(gamma_per_W_km > 0) ||
        !(bandwidth_Hz > 0) || !(span_km > 0) || !(n_sp > 0) ||
        !(photon_energy_J > 0) || !(alpha_loss_dB_per_km > 0) ||
        !(power_W > 0))
      throw ParameterError("physical parameters must be strictly positive");
    if (num_spans < 1) throw ParameterError("num_spans must be >= 1");
  }

  /// Amplifier gain, log10 g = 0.1 * alpha_loss * L (alpha_loss in dB/km).
  double gain() const { return std::pow(10.0, 0.1 * alpha_loss_dB_per_km * span_km); }

  /// ASE noise variance sigma^2 = n_sp * E_ph * (g - 1), in Joules.
  double sigma2_J() const { return n_sp * photon_energy_J * (gain() - 1.0); }
};

/// Derived dimensionless scales linking the physical and normalized models.
struct ChannelScales {
  double t_s = 0;    // time scale, seconds
  double R = 0;      // power scale, Watts
  double ell_km = 0; // length scale, km
  double eps2 = 0;   // normalized per-amplifier noise variance
  double L_s = 0;    // normalized span length
  double T_s = 0;    // normalized signal duration
  double tau = 0;    // normalized sample step, 1/(B t_s)
  double D = 0;      // per-mode variance (1 by construction)
  double M = 0;      // complex degrees of freedom, B*T
  double Bt_s = 0;   // bandwidth-time-scale product
};

/// Map Table-style physical parameters plus signal duration T to the scales
/// of the dimensionless propagation equation.  Closed forms:
///   t_s = beta2*B/(gamma*P),  R = gamma*P^2/(beta2*B^2),
///   L_s = L*gamma^2*P^2/(2*beta2*B^2),  eps2 = sigma^2*B/P,  M = B*T.
inline ChannelScales derive_scales(const PhysicalParams& p, double duration_T_s) {
  p.validate();
  if (!(duration_T_s > 0)) throw ParameterError("duration must be positive");
  const double beta2_s2_per_km = p.beta2_ps2_per_km * 1e-24;
  const double B = p.bandwidth_Hz;
  const double P = p.power_W;

  ChannelScales s;
  s.t_s = beta2_s2_per_km * B / (p.gamma_per_W_km * P);
  s.R = p.gamma_per_W_km * P * P / (beta2_s2_per_km * B * B);
  s.ell_km = 2.0 * s.t_s * s.t_s / beta2_s2_per_km;
  s.L_s = p.span_km * p.gamma_per_W_km * p.gamma_per_W_km * P * P /
          (2.0 * beta2_s2_per_km * B * B);
  s.eps2 = p.sigma2_J() * B / P;
  s.Bt_s = B * s.t_s;
  s.tau = 1.0 / s.Bt_s;
  s.T_s = duration_T_s / s.t_s;
  s.D = P / (s.R * B * s.t_s);
  s.M = B * duration_T_s;
  return s;
}

/// Same derivation with duration given as a number of complex symbols M
/// (T = M/B), the form the experiment configs use.
inline ChannelScales derive_scales_symbols(const PhysicalParams& p, int M) {
  if (M < 2) throw ParameterError("duration_symbols must be >= 2");
  return derive_scales(p, static_cast<double>(M) / p.bandwidth_Hz);
}

/// SNR = P/(K sigma^2 B), the argument of the linear Shannon limit.
inline double snr(const PhysicalParams& p) {
  p.validate();
  return p.power_W / (p.num_spans * p.sigma2_J() * p.bandwidth_Hz);
}

/// True iff the high-bandwidth condition B*t_s >= threshold holds
/// (boundary inclusive).  Points failing this are flagged, not dropped.
inline bool validity_flag(const ChannelScales& s, double threshold = 10.0) {
  return s.Bt_s >= threshold;
}

}  // namespace nlsft

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <nlsft/units.hpp>

using namespace nlsft;

TEST_CASE("gain and noise variance follow the loss budget") {
  PhysicalParams p;  // 0.2 dB/km over 100 km -> 20 dB -> factor 100
  CHECK(p.gain() == Catch::Approx(100.0).epsilon(1e-12));
  CHECK(p.sigma2_J() == Catch::Approx(1.0 * 13.2e-20 * 99.0).epsilon(1e-12));
}

TEST_CASE("scale derivation closed forms") {
  PhysicalParams p;  // defaults: 1 mW, 100 GHz
  const ChannelScales s = derive_scales_symbols(p, 64);

  const double beta2 = p.beta2_ps2_per_km * 1e-24;
  const double B = p.bandwidth_Hz, P = p.power_W, g = p.gamma_per_W_km;
  CHECK(s.t_s == Catch::Approx(beta2 * B / (g * P)).epsilon(1e-12));
  CHECK(s.tau == Catch::Approx(1.0 / (B * s.t_s)).epsilon(1e-12));
  CHECK(s.L_s ==
        Catch::Approx(p.span_km * g * g * P * P / (2.0 * beta2 * B * B))
            .epsilon(1e-12));
  CHECK(s.eps2 == Catch::Approx(p.sigma2_J() * B / P).epsilon(1e-12));
  CHECK(s.M == Catch::Approx(64.0).epsilon(1e-12));
  // per-mode variance is 1 by construction of the power scale
  CHECK(s.D == Catch::Approx(1.0).epsilon(1e-12));
  // at 1 mW the sample step is ~5.9e-3
  CHECK(s.tau == Catch::Approx(5.861e-3).epsilon(1e-3));
}

TEST_CASE("sample step scales linearly with power") {
  PhysicalParams p;
  const double tau1 = derive_scales_symbols(p, 64).tau;
  p.power_W *= 10.0;
  const double tau10 = derive_scales_symbols(p, 64).tau;
  CHECK(tau10 == Catch::Approx(10.0 * tau1).epsilon(1e-12));
}

TEST_CASE("snr of the linear reference channel") {
  PhysicalParams p;
  const double expected =
      p.power_W / (p.num_spans * p.sigma2_J() * p.bandwidth_Hz);
  CHECK(snr(p) == Catch::Approx(expected).epsilon(1e-12));
  CHECK(snr(p) > 0);
}

TEST_CASE("validity flag boundary is inclusive") {
  PhysicalParams p;
  ChannelScales s = derive_scales_symbols(p, 64);
  s.Bt_s = 10.0;
  CHECK(validity_flag(s));
  s.Bt_s = 9.999999;
  CHECK_FALSE(validity_flag(s));
  s.Bt_s = 5.0;
  CHECK(validity_flag(s, 5.0));
}

TEST_CASE("invalid physical parameters are rejected") {
  PhysicalParams p;
  p.power_W = 0.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = PhysicalParams{};
  p.num_spans = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = PhysicalParams{};
  CHECK_THROWS_AS(derive_scales(p, -1.0), ParameterError);
  CHECK_THROWS_AS(derive_scales_symbols(p, 1), ParameterError);
}

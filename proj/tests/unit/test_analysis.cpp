#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "metarefl/analysis.hpp"
#include "metarefl/errors.hpp"
#include "metarefl/synthesis.hpp"
#include "oracles.hpp"

using namespace metarefl;

namespace {

IncidenceSpec design(double ti, double tr) {
  IncidenceSpec inc;
  inc.theta_i_deg = ti;
  inc.theta_r_deg = tr;
  return inc;
}

ImpedanceProfile uniform_profile(cplx z, double period, std::size_t n) {
  ImpedanceProfile p;
  p.period = period;
  p.x = uniform_grid(period, n);
  p.z.assign(n, z);
  p.singular.assign(n, false);
  return p;
}

// Smooth inductive reactance, bounded away from zero and poles.
ImpedanceProfile smooth_reactive(double period, std::size_t n, double a, double b, double c) {
  ImpedanceProfile p = uniform_profile(cplx(0.0, 0.0), period, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * kPi * p.x[i] / period;
    p.z[i] = cplx(0.0, a + b * std::cos(t) + c * std::sin(2.0 * t));
  }
  return p;
}

double efficiency_sum(const ScatteringResult& r) {
  double s = 0.0;
  for (double e : r.efficiencies) s += e;
  return s;
}

AnalysisConfig orders(int n, int colloc = 4) {
  AnalysisConfig cfg;
  cfg.n_orders = n;
  cfg.colloc_factor = colloc;
  return cfg;
}

const ImpedanceProfile& synthesized_clamped() {
  static const ImpedanceProfile p = clamp_reactive(synthesize(design(0.0, 70.0), SynthesisConfig{}).profile);
  return p;
}

const double kPeriod70 = 1.0 / std::sin(70.0 * kPi / 180.0);

}  // namespace

TEST(ClosedForm, PecMirror) {
  const ScatteringResult r = scatter(uniform_profile(0.0, kPeriod70, 64), 0.0, orders(6));
  EXPECT_NEAR(std::abs(r.amplitude_of(0) - cplx(-1.0, 0.0)), 0.0, 1e-10);
  EXPECT_NEAR(r.efficiency_of(0), 1.0, 1e-10);
  for (std::size_t i = 0; i < r.basis.size(); ++i) {
    if (r.basis.harmonics[i].n != 0) { EXPECT_LT(std::abs(r.amplitudes[i]), 1e-10); }
  }
  EXPECT_NEAR(r.power_balance, 1.0, 1e-10);
}

TEST(ClosedForm, MatchedAbsorberReflectsNothing) {
  for (double ti : {0.0, 30.0, 60.0}) {
    const double zc = 1.0 / std::cos(oracle::rad(ti));
    const ScatteringResult r = scatter(uniform_profile(zc, 1.7, 64), ti, orders(5));
    for (const cplx& a : r.amplitudes) EXPECT_LT(std::abs(a), 1e-10) << ti;
    EXPECT_NEAR(r.absorbed_fraction, 1.0, 1e-10);
  }
}

TEST(ClosedForm, UniformReactanceIsAllPass) {
  for (double x : {-3.0, -0.4, 0.7, 2.5}) {
    for (double ti : {0.0, 25.0}) {
      const ScatteringResult r = scatter(uniform_profile(cplx(0.0, x), 1.3, 64), ti, orders(5));
      const oracle::cd expect = oracle::uniform_reflection(oracle::cd(0.0, x), ti);
      EXPECT_NEAR(std::abs(r.amplitude_of(0) - expect), 0.0, 1e-10) << x << " " << ti;
      EXPECT_NEAR(std::abs(r.amplitude_of(0)), 1.0, 1e-10);
    }
  }
  // Normal incidence in closed form: A0 = (jX - 1)/(jX + 1).
  const ScatteringResult r = scatter(uniform_profile(cplx(0.0, 0.7), 1.3, 64), 0.0, orders(5));
  EXPECT_NEAR(std::abs(r.amplitude_of(0) - (cplx(0.0, 0.7) - 1.0) / (cplx(0.0, 0.7) + 1.0)), 0.0, 1e-12);
}

TEST(ReferenceProfile, ComplexProfileReproducesTwoWaveField) {
  const ReferenceDesign ref = reference_profile(design(0.0, 70.0), 512);
  const ScatteringResult r = scatter(ref.profile, 0.0);
  EXPECT_NEAR(std::abs(r.amplitude_of(1) - std::sqrt(1.0 / std::cos(oracle::rad(70.0)))), 0.0, 1e-6);
  for (std::size_t i = 0; i < r.basis.size(); ++i) {
    if (r.basis.harmonics[i].n != 1) { EXPECT_LT(std::abs(r.amplitudes[i]), 1e-6); }
  }
  EXPECT_NEAR(r.power_balance, 1.0, 1e-6);
  EXPECT_LT(r.bc_residual, 1e-6);
}

TEST(RoundTrip, ClampedSynthesisDeflectsAlmostEverything) {
  const ScatteringResult r = scatter(synthesized_clamped(), 0.0);
  EXPECT_GE(r.efficiency_of(1), 0.98);
  EXPECT_GE(efficiency_sum(r), 0.999);
  EXPECT_LE(efficiency_sum(r), 1.001);
  for (double e : r.efficiencies) EXPECT_GE(e, 0.0);
}

TEST(RoundTrip, TruncationAndCollocationConvergence) {
  const ScatteringResult base = scatter(synthesized_clamped(), 0.0);
  const ScatteringResult twice = scatter(synthesized_clamped(), 0.0, orders(40));
  EXPECT_LT(std::abs(base.efficiency_of(1) - twice.efficiency_of(1)), 1e-4);
  const ScatteringResult dense = scatter(synthesized_clamped(), 0.0, orders(20, 8));
  for (std::size_t i = 0; i < base.basis.size(); ++i) {
    if (base.basis.harmonics[i].propagating()) {
      EXPECT_LT(std::abs(base.amplitudes[i] - dense.amplitudes[i]), 1e-6);
    }
  }
}

TEST(Properties, TruncationConvergenceOnSmoothReactiveProfiles) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 8; ++draw) {
    const double a = 0.6 + u(gen), b = 0.4 * u(gen), c = 0.15 * u(gen);
    const double period = 1.2 + 1.5 * u(gen);
    const ImpedanceProfile p = smooth_reactive(period, 256, a, b, c);
    const double ti = 40.0 * u(gen);
    const ScatteringResult r1 = scatter(p, ti);
    const ScatteringResult r2 = scatter(p, ti, orders(40));
    for (int n = -2; n <= 2; ++n) {
      EXPECT_LT(std::abs(r1.efficiency_of(n) - r2.efficiency_of(n)), 1e-4) << "draw " << draw << " n " << n;
    }
    EXPECT_LE(r1.power_balance, 1.0 + 1e-6);
    EXPECT_NEAR(r1.power_balance, 1.0, 1e-6);
  }
}

TEST(Properties, GridIndependenceOnSmoothProfiles) {
  const ImpedanceProfile p = smooth_reactive(1.8, 256, 0.9, 0.3, 0.1);
  const ScatteringResult r4 = scatter(p, 12.0, orders(20, 4));
  const ScatteringResult r8 = scatter(p, 12.0, orders(20, 8));
  for (std::size_t i = 0; i < r4.basis.size(); ++i) {
    if (r4.basis.harmonics[i].propagating()) { EXPECT_LT(std::abs(r4.amplitudes[i] - r8.amplitudes[i]), 1e-6); }
  }
}

TEST(Properties, ActiveLossyProfileSatisfiesBoundaryCondition) {
  const ReferenceDesign ref = reference_profile(design(10.0, -45.0), 512);
  EXPECT_LT(scatter(ref.profile, 10.0).bc_residual, 1e-6);
}

// The reactance of the clamped two-wave reference crosses zero on the capacitive
// side, which supports arbitrarily tightly bound surface waves; the truncated
// solve therefore does not settle as N_a grows. Pinned here so a change in that
// behaviour is noticed.
TEST(ClampedReference, TruncationDoesNotConverge) {
  const ImpedanceProfile p = clamp_reactive(reference_profile(design(0.0, 70.0), 256).profile);
  const ScatteringResult r20 = scatter(p, 0.0, orders(20));
  const ScatteringResult r40 = scatter(p, 0.0, orders(40, 8));
  EXPECT_GT(std::abs(r20.efficiency_of(1) - r40.efficiency_of(1)), 1e-3);
  EXPECT_GT(r20.bc_residual, 1e-3);
}

TEST(Deflection, StrictlyDecreasingWithRegressionValue) {
  const std::vector<DeflectionPoint> pts = deflection_curve(0.0, {30.0, 50.0, 70.0, 80.0});
  ASSERT_EQ(pts.size(), 4u);
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LT(pts[i].efficiency, pts[i - 1].efficiency);
  for (const auto& p : pts) {
    EXPECT_GE(p.efficiency, 0.0);
    EXPECT_LE(p.efficiency, 1.0 + 1e-6);
  }
  EXPECT_NEAR(pts[2].efficiency, 0.79348321267339272, 1e-9);  // regression constant
}

TEST(FrequencySweep, UnitFactorMatchesScatter) {
  const std::vector<SweepColumn> cols = frequency_sweep(synthesized_clamped(), {1.0}, 0.0);
  ASSERT_EQ(cols.size(), 1u);
  ASSERT_TRUE(cols[0].valid);
  const ScatteringResult r = scatter(synthesized_clamped(), 0.0);
  for (int n = kResponseOrderMin; n <= kResponseOrderMax; ++n) {
    EXPECT_EQ(cols[0].efficiencies[static_cast<std::size_t>(n - kResponseOrderMin)], r.efficiency_of(n));
  }
}

TEST(FrequencySweep, PecIsFrequencyFlat) {
  const std::vector<double> ks{0.9, 0.95, 1.0, 1.05, 1.1};
  for (Dispersion d : {Dispersion::None, Dispersion::Linear}) {
    for (const SweepColumn& c : frequency_sweep(uniform_profile(0.0, kPeriod70, 64), ks, 0.0, d)) {
      ASSERT_TRUE(c.valid) << c.error;
      EXPECT_NEAR(c.efficiencies[3], 1.0, 1e-10);
    }
  }
}

TEST(FrequencySweep, ReactanceIsPassiveAtEveryFactor) {
  std::vector<double> ks;
  for (int i = 0; i <= 10; ++i) ks.push_back(0.9 + 0.02 * i);
  for (Dispersion d : {Dispersion::None, Dispersion::Linear}) {
    for (const SweepColumn& c : frequency_sweep(synthesized_clamped(), ks, 0.0, d)) {
      ASSERT_TRUE(c.valid) << c.error;
      EXPECT_LE(c.power_balance, 1.0 + 1e-6) << c.k_factor;
    }
  }
}

TEST(FrequencySweep, OffDesignIlluminationStaysPassive) {
  const ScatteringResult r = scatter(synthesized_clamped(), 10.0);
  EXPECT_LE(r.power_balance, 1.0 + 1e-6);
  EXPECT_GT(r.power_balance, 0.0);
}

TEST(FrequencySweep, InvalidFactorMarksColumn) {
  const std::vector<SweepColumn> cols = frequency_sweep(uniform_profile(0.0, 1.5, 64), {1.0, -1.0}, 0.0);
  EXPECT_TRUE(cols[0].valid);
  EXPECT_FALSE(cols[1].valid);
  EXPECT_FALSE(cols[1].error.empty());
}

TEST(Dispersion, ParseAndScale) {
  EXPECT_EQ(parse_dispersion("none"), Dispersion::None);
  EXPECT_EQ(parse_dispersion("linear"), Dispersion::Linear);
  EXPECT_THROW(parse_dispersion("cubic"), Error);
  const ImpedanceProfile p = uniform_profile(cplx(0.2, 1.5), 1.0, 4);
  EXPECT_EQ(disperse_profile(p, 1.1, Dispersion::Linear).z[0], cplx(0.2, 1.5 * 1.1));
  EXPECT_EQ(disperse_profile(p, 1.1, Dispersion::None).z[0], cplx(0.2, 1.5));
}

TEST(Resample, IdentityAndSingularHandling) {
  const ImpedanceProfile p = smooth_reactive(1.4, 64, 1.0, 0.3, 0.0);
  const ImpedanceProfile same = resample_profile(p, 64);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(std::abs(same.z[i] - p.z[i]), 0.0, 1e-12);
  const ImpedanceProfile up = resample_profile(p, 256);
  EXPECT_EQ(up.size(), 256u);
  EXPECT_NEAR(up.period, p.period, 1e-15);
  for (std::size_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up.z[i].real(), 0.0, 1e-10);

  ImpedanceProfile s = p;
  s.singular[5] = true;
  s.z[5] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  const ImpedanceProfile r = resample_profile(s, 128);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!r.singular[i]) { EXPECT_TRUE(std::isfinite(std::abs(r.z[i]))); }
  }
}

TEST(Errors, TooFewUsableSamples) {
  ImpedanceProfile p = uniform_profile(cplx(0.0, 1.0), 1.0, 4);
  for (std::size_t i = 1; i < 4; ++i) {
    p.singular[i] = true;
    p.z[i] = cplx(std::nan(""), std::nan(""));
  }
  try {
    scatter(p, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularProfile);
  }
  EXPECT_THROW(scatter(uniform_profile(0.0, 1.0, 8), 95.0), Error);
  AnalysisConfig bad;
  bad.colloc_factor = 1;
  EXPECT_THROW(scatter(uniform_profile(0.0, 1.0, 8), 0.0, bad), Error);
}

TEST(Errors, SingularSamplesAreExcludedAndCounted) {
  ImpedanceProfile p = smooth_reactive(1.5, 512, 1.0, 0.2, 0.0);
  p.singular[7] = true;
  p.z[7] = cplx(std::nan(""), std::nan(""));
  const ScatteringResult r = scatter(p, 0.0);
  EXPECT_EQ(r.excluded_singular, 1u);
  EXPECT_NEAR(r.power_balance, 1.0, 1e-4);
}

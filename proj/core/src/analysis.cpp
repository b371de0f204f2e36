#include "metarefl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace {

constexpr double kPoleEps = 1e-14;

struct Collocation {
  ImpedanceProfile profile;
  bool resampled = false;
};

Collocation collocation_profile(const ImpedanceProfile& profile, std::size_t needed) {
  Collocation c;
  if (profile.usable_count() >= needed) {
    c.profile = profile;
  } else {
    c.profile = resample_profile(profile, needed);
    c.resampled = true;
  }
  return c;
}

double row_weight(cplx z, bool enabled) { return enabled ? 1.0 / std::max(1.0, std::abs(z)) : 1.0; }

}  // namespace

void AnalysisConfig::validate() const {
  if (n_orders < 1) fail(ErrorCode::InvalidArgument, "n_orders must be >= 1");
  if (colloc_factor < 2) fail(ErrorCode::InvalidArgument, "colloc_factor must be >= 2");
}

double ScatteringResult::efficiency_of(int order) const {
  const int nm = basis.n_max();
  if (order < -nm || order > nm) return 0.0;
  return efficiencies[static_cast<std::size_t>(order + nm)];
}

cplx ScatteringResult::amplitude_of(int order) const {
  const int nm = basis.n_max();
  if (order < -nm || order > nm) return {0.0, 0.0};
  return amplitudes[static_cast<std::size_t>(order + nm)];
}

ImpedanceProfile resample_profile(const ImpedanceProfile& profile, std::size_t count) {
  profile.validate();
  std::vector<cplx> gamma(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile.singular[i]) {
      gamma[i] = cplx(1.0, 0.0);
      continue;
    }
    const cplx z = profile.z[i];
    const cplx den = z + 1.0;
    if (std::abs(den) < kPoleEps) {
      fail(ErrorCode::SingularProfile, "z = -eta at sample " + std::to_string(i) +
                                           " cannot be mapped for resampling");
    }
    gamma[i] = (z - 1.0) / den;
  }
  const std::vector<cplx> g = trig_resample(gamma, count);

  ImpedanceProfile out;
  out.period = profile.period;
  out.x = uniform_grid(profile.period, count);
  const double x0 = profile.x.front();
  for (double& x : out.x) x += x0;
  out.z.resize(count);
  out.singular.resize(count);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t q = 0; q < count; ++q) {
    const cplx den = 1.0 - g[q];
    if (std::abs(den) < kPoleEps) {
      out.singular[q] = true;
      out.z[q] = cplx(nan, nan);
    } else {
      out.singular[q] = false;
      out.z[q] = (1.0 + g[q]) / den;
    }
  }
  return out;
}

ScatteringResult scatter(const ImpedanceProfile& profile, double theta_i_deg, const AnalysisConfig& cfg,
                         double wavelength) {
  cfg.validate();
  profile.validate();
  if (!std::isfinite(theta_i_deg) || theta_i_deg <= -90.0 || theta_i_deg >= 90.0) {
    fail(ErrorCode::InvalidArgument, "theta_i must lie in (-90, 90) degrees");
  }
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidArgument, "wavelength must be positive");
  if (profile.usable_count() < 2) {
    fail(ErrorCode::SingularProfile, "profile has " + std::to_string(profile.usable_count()) +
                                         " usable samples");
  }

  const std::size_t unknowns = static_cast<std::size_t>(2 * cfg.n_orders + 1);
  const std::size_t needed = static_cast<std::size_t>(cfg.colloc_factor) * unknowns;
  const Collocation col = collocation_profile(profile, needed);
  const ImpedanceProfile& prof = col.profile;

  const double sin_i = std::sin(deg_to_rad(theta_i_deg));
  const double cos_i = std::cos(deg_to_rad(theta_i_deg));
  const double k = 2.0 * kPi / wavelength;

  ScatteringResult out;
  out.basis = basis_for_period(sin_i, wavelength, prof.period, cfg.n_orders);
  out.resampled = col.resampled;

  std::vector<std::size_t> rows;
  rows.reserve(prof.size());
  for (std::size_t i = 0; i < prof.size(); ++i) {
    if (prof.singular[i]) {
      ++out.excluded_singular;
    } else {
      rows.push_back(i);
    }
  }
  if (rows.size() < unknowns) {
    fail(ErrorCode::SingularProfile, "only " + std::to_string(rows.size()) +
                                         " usable collocation rows for " +
                                         std::to_string(unknowns) + " unknowns");
  }

  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index n = static_cast<Eigen::Index>(unknowns);
  ComplexMatrix a(m, n);
  ComplexVector b(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    const double x = prof.x[i];
    const cplx z = prof.z[i];
    const double w = row_weight(z, cfg.row_scale);
    for (Eigen::Index c = 0; c < n; ++c) {
      const FloquetHarmonic& hm = out.basis.harmonics[static_cast<std::size_t>(c)];
      a(r, c) = w * (1.0 + z * hm.ky) * std::polar(1.0, -k * hm.kx * x);
    }
    b(r) = -w * (1.0 - z * cos_i) * std::polar(1.0, -k * sin_i * x);
  }

  const LeastSquaresSolution ls = solve_least_squares(a, b);
  out.condition = ls.condition;
  out.collocation_rows = rows.size();
  out.amplitudes.resize(unknowns);
  out.efficiencies.assign(unknowns, 0.0);
  double balance = 0.0;
  for (std::size_t c = 0; c < unknowns; ++c) {
    out.amplitudes[c] = ls.x(static_cast<Eigen::Index>(c));
    const FloquetHarmonic& hm = out.basis.harmonics[c];
    if (hm.propagating()) {
      out.efficiencies[c] = std::norm(out.amplitudes[c]) * hm.ky.real() / cos_i;
      balance += out.efficiencies[c];
    }
  }
  out.power_balance = balance;
  out.absorbed_fraction = 1.0 - balance;

  // Boundary-condition misfit on a 4x refined grid.
  const ImpedanceProfile fine = resample_profile(prof, 4 * prof.size());
  FieldSolution sol;
  sol.basis = out.basis;
  sol.incidence.theta_i_deg = theta_i_deg;
  sol.incidence.wavelength = wavelength;
  sol.amplitudes = out.amplitudes;
  const FieldSamples fields = eval_fields_at(sol, fine.x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    if (fine.singular[i]) continue;
    const cplx z = fine.z[i];
    const double w = row_weight(z, cfg.row_scale);
    const cplx inc = std::polar(1.0, -k * sin_i * fine.x[i]);
    num += std::norm(w * (fields.e_tz[i] + z * fields.h_tx[i]));
    den += std::norm(w * (inc - z * cos_i * inc));
  }
  out.bc_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return out;
}

std::string_view to_string(Dispersion d) noexcept {
  return d == Dispersion::Linear ? "linear" : "none";
}

Dispersion parse_dispersion(std::string_view text) {
  if (text == "none") return Dispersion::None;
  if (text == "linear") return Dispersion::Linear;
  fail(ErrorCode::InvalidArgument, "unknown dispersion model '" + std::string(text) + "'");
}

ImpedanceProfile disperse_profile(const ImpedanceProfile& profile, double k_factor, Dispersion d) {
  if (d == Dispersion::None) return profile;
  ImpedanceProfile out = profile;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.singular[i]) out.z[i] = cplx(out.z[i].real(), out.z[i].imag() * k_factor);
  }
  return out;
}

std::vector<SweepColumn> frequency_sweep(const ImpedanceProfile& profile,
                                         const std::vector<double>& k_factors, double theta_i_deg,
                                         Dispersion dispersion, const AnalysisConfig& cfg) {
  std::vector<SweepColumn> cols;
  cols.reserve(k_factors.size());
  for (double f : k_factors) {
    SweepColumn col;
    col.k_factor = f;
    try {
      if (!(f > 0.0) || !std::isfinite(f)) fail(ErrorCode::InvalidArgument, "k_factor must be positive");
      const ScatteringResult res = scatter(disperse_profile(profile, f, dispersion), theta_i_deg, cfg, 1.0 / f);
      for (int o = kResponseOrderMin; o <= kResponseOrderMax; ++o) {
        col.efficiencies[static_cast<std::size_t>(o - kResponseOrderMin)] = res.efficiency_of(o);
      }
      col.power_balance = res.power_balance;
      col.valid = true;
    } catch (const Error& e) {
      col.valid = false;
      col.error = e.what();
    }
    cols.push_back(col);
  }
  return cols;
}

std::vector<DeflectionPoint> deflection_curve(double theta_i_deg, const std::vector<double>& theta_r_deg,
                                              const AnalysisConfig& cfg, std::size_t profile_samples) {
  std::vector<DeflectionPoint> out;
  out.reserve(theta_r_deg.size());
  for (double tr : theta_r_deg) {
    IncidenceSpec inc;
    inc.theta_i_deg = theta_i_deg;
    inc.theta_r_deg = tr;
    const ReferenceDesign ref = reference_profile(inc, profile_samples);
    const ScatteringResult res = scatter(clamp_reactive(ref.profile), theta_i_deg, cfg);
    DeflectionPoint pt;
    pt.theta_r_deg = tr;
    pt.efficiency = res.efficiency_of(*ref.solution.basis.target_order);
    pt.power_balance = res.power_balance;
    out.push_back(pt);
  }
  return out;
}

}  // namespace metarefl

#include "metarefl/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace {

constexpr double kGeometryEps = 1e-12;

void check_angle(double deg, const char* name) {
  if (!std::isfinite(deg) || deg <= -90.0 || deg >= 90.0) {
    fail(ErrorCode::InvalidArgument,
         std::string(name) + " must lie in (-90, 90) degrees, got " + std::to_string(deg));
  }
}

}  // namespace

double deg_to_rad(double deg) noexcept { return deg * kPi / 180.0; }
double rad_to_deg(double rad) noexcept { return rad * 180.0 / kPi; }

double IncidenceSpec::sin_i() const noexcept { return std::sin(deg_to_rad(theta_i_deg)); }
double IncidenceSpec::cos_i() const noexcept { return std::cos(deg_to_rad(theta_i_deg)); }
double IncidenceSpec::sin_r() const noexcept { return std::sin(deg_to_rad(theta_r_deg)); }
double IncidenceSpec::cos_r() const noexcept { return std::cos(deg_to_rad(theta_r_deg)); }
double IncidenceSpec::wavenumber() const noexcept { return 2.0 * kPi / wavelength; }

void IncidenceSpec::validate() const {
  check_angle(theta_i_deg, "theta_i");
  check_angle(theta_r_deg, "theta_r");
  if (!(wavelength > 0.0) || !(e0 > 0.0) || !(eta > 0.0)) {
    fail(ErrorCode::InvalidArgument, "wavelength, e0 and eta must be positive");
  }
  if (std::abs(sin_r() - sin_i()) <= kGeometryEps) {
    fail(ErrorCode::InvalidGeometry,
         "theta_r equals theta_i: the anomalous period is infinite");
  }
}

FloquetHarmonic make_harmonic(int n, double kx) {
  FloquetHarmonic h;
  h.n = n;
  h.kx = kx;
  const double d = 1.0 - kx * kx;
  if (std::abs(kx) <= 1.0) {
    h.kind = HarmonicKind::Propagating;
    h.ky = cplx(std::sqrt(std::max(d, 0.0)), 0.0);
    h.angle_deg = rad_to_deg(std::asin(kx));
  } else {
    h.kind = HarmonicKind::Evanescent;
    h.ky = cplx(0.0, -std::sqrt(-d));
  }
  return h;
}

std::size_t HarmonicBasis::index_of(int order) const {
  const int nm = n_max();
  if (order < -nm || order > nm) {
    fail(ErrorCode::InvalidArgument, "order " + std::to_string(order) + " outside basis");
  }
  return static_cast<std::size_t>(order + nm);
}

HarmonicBasis basis_for_period(double sin_i, double wavelength, double period, int n_max) {
  if (n_max < 1) fail(ErrorCode::InvalidArgument, "n_max must be >= 1");
  if (!(period > 0.0) || !std::isfinite(period)) {
    fail(ErrorCode::InvalidArgument, "period must be positive and finite");
  }
  if (!(wavelength > 0.0)) fail(ErrorCode::InvalidArgument, "wavelength must be positive");
  HarmonicBasis basis;
  basis.period = period;
  basis.wavelength = wavelength;
  basis.sin_i = sin_i;
  basis.harmonics.reserve(static_cast<std::size_t>(2 * n_max + 1));
  const double step = wavelength / period;
  for (int n = -n_max; n <= n_max; ++n) {
    basis.harmonics.push_back(make_harmonic(n, sin_i + n * step));
  }
  return basis;
}

HarmonicBasis build_basis(const IncidenceSpec& incidence, int n_max) {
  incidence.validate();
  const double delta = incidence.sin_r() - incidence.sin_i();
  const double period = incidence.wavelength / std::abs(delta);
  HarmonicBasis basis = basis_for_period(incidence.sin_i(), incidence.wavelength, period, n_max);
  basis.target_order = delta > 0.0 ? 1 : -1;
  return basis;
}

void FieldSolution::validate() const {
  if (amplitudes.size() != basis.size()) {
    fail(ErrorCode::InvalidArgument, "amplitude count " + std::to_string(amplitudes.size()) +
                                         " does not match basis size " +
                                         std::to_string(basis.size()));
  }
}

std::size_t ImpedanceProfile::usable_count() const noexcept {
  return static_cast<std::size_t>(std::count(singular.begin(), singular.end(), false));
}

void ImpedanceProfile::validate() const {
  if (x.size() != z.size() || x.size() != singular.size()) {
    fail(ErrorCode::InvalidArgument, "profile sequences differ in length");
  }
  if (x.size() < 2) fail(ErrorCode::InvalidArgument, "profile needs at least two samples");
  if (!(period > 0.0) || !std::isfinite(period)) {
    fail(ErrorCode::InvalidArgument, "profile period must be positive");
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!singular[i] && !(std::isfinite(z[i].real()) && std::isfinite(z[i].imag()))) {
      fail(ErrorCode::InvalidArgument, "non-singular sample " + std::to_string(i) + " is not finite");
    }
  }
}

std::vector<double> uniform_grid(double period, std::size_t count) {
  std::vector<double> x(count);
  for (std::size_t p = 0; p < count; ++p) {
    x[p] = period * static_cast<double>(p) / static_cast<double>(count);
  }
  return x;
}

std::size_t min_samples(const HarmonicBasis& basis) noexcept { return 8 * basis.size(); }

FieldSamples eval_fields_at(const FieldSolution& solution, std::span<const double> xs) {
  solution.validate();
  const IncidenceSpec& inc = solution.incidence;
  const double k = 2.0 * kPi / solution.basis.wavelength;
  const double sin_i = solution.basis.sin_i;
  const double cos_i = std::sqrt(std::max(0.0, 1.0 - sin_i * sin_i));

  FieldSamples out;
  out.x.assign(xs.begin(), xs.end());
  out.e_tz.resize(xs.size());
  out.h_tx.resize(xs.size());
  out.period = solution.basis.period;
  out.e0 = inc.e0;
  out.eta = inc.eta;

  for (std::size_t p = 0; p < xs.size(); ++p) {
    const double x = xs[p];
    const cplx inc_phase = std::polar(1.0, -k * sin_i * x);
    cplx e = inc.e0 * inc_phase;
    cplx h = (-inc.e0 * cos_i / inc.eta) * inc_phase;
    for (std::size_t i = 0; i < solution.basis.size(); ++i) {
      const cplx a = solution.amplitudes[i];
      if (a == cplx(0.0, 0.0)) continue;
      const FloquetHarmonic& hm = solution.basis.harmonics[i];
      const cplx term = a * std::polar(1.0, -k * hm.kx * x);
      e += term;
      h += (hm.ky / inc.eta) * term;
    }
    out.e_tz[p] = e;
    out.h_tx[p] = h;
  }
  return out;
}

FieldSamples eval_fields(const FieldSolution& solution, std::size_t sample_count) {
  solution.validate();
  if (sample_count < min_samples(solution.basis)) {
    fail(ErrorCode::InvalidArgument, "sample count " + std::to_string(sample_count) +
                                         " below floor " +
                                         std::to_string(min_samples(solution.basis)));
  }
  const std::vector<double> x = uniform_grid(solution.basis.period, sample_count);
  return eval_fields_at(solution, x);
}

std::vector<double> poynting_normal(const FieldSamples& samples) {
  std::vector<double> s(samples.size());
  for (std::size_t p = 0; p < samples.size(); ++p) {
    s[p] = 0.5 * std::real(samples.e_tz[p] * std::conj(samples.h_tx[p]));
  }
  return s;
}

double mean_power_balance(const FieldSolution& solution) {
  solution.validate();
  const IncidenceSpec& inc = solution.incidence;
  const double sin_i = solution.basis.sin_i;
  const double cos_i = std::sqrt(std::max(0.0, 1.0 - sin_i * sin_i));
  double total = -cos_i * inc.e0 * inc.e0 / (2.0 * inc.eta);
  for (std::size_t i = 0; i < solution.basis.size(); ++i) {
    const FloquetHarmonic& hm = solution.basis.harmonics[i];
    if (!hm.propagating()) continue;
    total += hm.ky.real() * std::norm(solution.amplitudes[i]) / (2.0 * inc.eta);
  }
  return total;
}

ImpedanceProfile surface_impedance(const FieldSamples& samples, std::optional<double> h_floor) {
  const double floor = h_floor.value_or(1e-9 * samples.e0 / samples.eta);
  if (!(floor > 0.0)) fail(ErrorCode::InvalidArgument, "h_floor must be positive");

  ImpedanceProfile prof;
  prof.x = samples.x;
  prof.period = samples.period;
  prof.z.resize(samples.size());
  prof.singular.resize(samples.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t usable = 0;
  for (std::size_t p = 0; p < samples.size(); ++p) {
    const cplx h = samples.h_tx[p];
    if (std::abs(h) < floor) {
      prof.singular[p] = true;
      prof.z[p] = cplx(nan, nan);
    } else {
      prof.singular[p] = false;
      prof.z[p] = -samples.e_tz[p] / (h * samples.eta);
      ++usable;
    }
  }
  if (usable == 0 && samples.size() > 0) {
    fail(ErrorCode::AllSingular, "tangential H vanishes at every sample");
  }
  return prof;
}

FieldSolution reference_solution(const IncidenceSpec& incidence) {
  FieldSolution sol;
  sol.basis = build_basis(incidence, 1);
  sol.incidence = incidence;
  sol.amplitudes.assign(sol.basis.size(), cplx(0.0, 0.0));
  const double magnitude = incidence.e0 * std::sqrt(incidence.cos_i() / incidence.cos_r());
  sol.amplitudes[sol.basis.index_of(*sol.basis.target_order)] = cplx(magnitude, 0.0);
  return sol;
}

ReferenceDesign reference_profile(const IncidenceSpec& incidence, std::size_t sample_count) {
  ReferenceDesign ref;
  ref.solution = reference_solution(incidence);
  ref.samples = eval_fields(ref.solution, sample_count);
  ref.profile = surface_impedance(ref.samples);
  return ref;
}

ImpedanceProfile clamp_reactive(const ImpedanceProfile& profile) {
  ImpedanceProfile out = profile;
  for (std::size_t i = 0; i < out.z.size(); ++i) {
    if (!out.singular[i]) out.z[i] = cplx(0.0, out.z[i].imag());
  }
  return out;
}

}  // namespace metarefl

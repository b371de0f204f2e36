#pragma once

// Floquet-harmonic description of TE plane-wave reflection from a periodic,
// impenetrable surface lying in the xz-plane (medium in y > 0).
//
// Conventions used throughout the library:
//   * phasors carry e^{+j omega t}; a reflected harmonic is e^{-j k (kx x + ky y)}
//   * kx, ky are normalized to k = 2 pi / wavelength
//   * propagating orders have real ky >= 0, evanescent orders ky = -j sqrt(kx^2 - 1)
//   * E is along z, H along x; H_x = (ky / eta) E_z for each reflected harmonic
//   * surface impedance z = -E_tz / H_tx, normalized to eta (matched absorber: 1/cos theta_i)
//   * lengths are expressed in design wavelengths

#include <complex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace metarefl {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

double deg_to_rad(double deg) noexcept;
double rad_to_deg(double rad) noexcept;

struct IncidenceSpec {
  double theta_i_deg = 0.0;
  double theta_r_deg = 0.0;
  double wavelength = 1.0;
  double e0 = 1.0;
  double eta = 1.0;

  double sin_i() const noexcept;
  double cos_i() const noexcept;
  double sin_r() const noexcept;
  double cos_r() const noexcept;
  double wavenumber() const noexcept;  // 2 pi / wavelength

  // Throws InvalidArgument for out-of-range angles or non-positive constants
  // and InvalidGeometry when the anomalous period would be infinite.
  void validate() const;
};

enum class HarmonicKind { Propagating, Evanescent };

struct FloquetHarmonic {
  int n = 0;
  double kx = 0.0;
  cplx ky;
  HarmonicKind kind = HarmonicKind::Propagating;
  std::optional<double> angle_deg;  // reflection angle, propagating orders only

  bool propagating() const noexcept { return kind == HarmonicKind::Propagating; }
};

struct HarmonicBasis {
  double period = 0.0;       // D_x
  double wavelength = 1.0;   // wavelength the kx/ky normalization refers to
  double sin_i = 0.0;
  std::vector<FloquetHarmonic> harmonics;  // orders -n_max..+n_max
  std::optional<int> target_order;         // set for design bases only

  int n_max() const noexcept { return static_cast<int>(harmonics.size() / 2); }
  std::size_t size() const noexcept { return harmonics.size(); }
  std::size_t index_of(int order) const;  // throws InvalidArgument if absent
  const FloquetHarmonic& at_order(int order) const { return harmonics[index_of(order)]; }
};

// Single-harmonic dispersion relation for the normalized tangential wavenumber.
FloquetHarmonic make_harmonic(int n, double kx);

// Anomalous-reflection design basis: D_x = wavelength / |sin theta_r - sin theta_i|.
HarmonicBasis build_basis(const IncidenceSpec& incidence, int n_max);

// Basis for an arbitrary period, used by the scattering solver and frequency sweeps.
HarmonicBasis basis_for_period(double sin_i, double wavelength, double period, int n_max);

struct FieldSolution {
  HarmonicBasis basis;
  IncidenceSpec incidence;
  std::vector<cplx> amplitudes;  // reflected amplitude per harmonic, field units of e0

  // Throws InvalidArgument when the amplitude count does not match the basis.
  void validate() const;
};

struct FieldSamples {
  std::vector<double> x;
  std::vector<cplx> e_tz;
  std::vector<cplx> h_tx;
  double period = 0.0;
  double e0 = 1.0;
  double eta = 1.0;

  std::size_t size() const noexcept { return x.size(); }
};

struct ImpedanceProfile {
  std::vector<double> x;
  std::vector<cplx> z;        // normalized to eta; NaN where singular
  std::vector<bool> singular;
  double period = 0.0;

  std::size_t size() const noexcept { return x.size(); }
  std::size_t usable_count() const noexcept;
  void validate() const;  // structural checks, throws InvalidArgument
};

// Uniform endpoint-exclusive grid over [0, period).
std::vector<double> uniform_grid(double period, std::size_t count);

// Minimum sample count accepted by eval_fields for a given basis.
std::size_t min_samples(const HarmonicBasis& basis) noexcept;

FieldSamples eval_fields(const FieldSolution& solution, std::size_t sample_count);

// Evaluates the total tangential fields at arbitrary abscissae (no sampling floor).
FieldSamples eval_fields_at(const FieldSolution& solution, std::span<const double> xs);

std::vector<double> poynting_normal(const FieldSamples& samples);

// Period average of S_y from harmonic orthogonality.
double mean_power_balance(const FieldSolution& solution);

// h_floor defaults to 1e-9 e0/eta.
ImpedanceProfile surface_impedance(const FieldSamples& samples,
                                   std::optional<double> h_floor = std::nullopt);

struct ReferenceDesign {
  FieldSolution solution;
  FieldSamples samples;
  ImpedanceProfile profile;
};

// Incident wave plus a single anomalous order carrying all of the incident power.
FieldSolution reference_solution(const IncidenceSpec& incidence);
ReferenceDesign reference_profile(const IncidenceSpec& incidence, std::size_t sample_count);

// Drops the real part of every usable sample: z <- j Im z.
ImpedanceProfile clamp_reactive(const ImpedanceProfile& profile);

}  // namespace metarefl

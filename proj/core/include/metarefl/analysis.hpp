#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "metarefl/em.hpp"
#include "metarefl/numerics.hpp"

namespace metarefl {

struct AnalysisConfig {
  int n_orders = 20;      // truncation half-width N_a
  int colloc_factor = 4;  // collocation points per unknown
  bool row_scale = true;  // scale each row by 1 / max(1, |z(x_p)|)

  void validate() const;
};

struct ScatteringResult {
  HarmonicBasis basis;             // orders -N_a..N_a at the analysis wavelength
  std::vector<cplx> amplitudes;    // A_n / e0
  std::vector<double> efficiencies;  // |A_n|^2 Re(ky_n) / cos theta_i; zero for evanescent orders
  double power_balance = 0.0;
  double absorbed_fraction = 0.0;
  double condition = 0.0;
  double bc_residual = 0.0;        // relative misfit on a 4x refined grid
  std::size_t collocation_rows = 0;
  std::size_t excluded_singular = 0;
  bool resampled = false;

  double efficiency_of(int order) const;  // 0 for orders outside the basis
  cplx amplitude_of(int order) const;
};

// Trigonometric resampling in the local reflection-coefficient domain
// gamma = (z - 1)/(z + 1), which stays bounded through reactance poles.
// Singular samples enter as gamma = 1 (z -> infinity).
ImpedanceProfile resample_profile(const ImpedanceProfile& profile, std::size_t count);

// Point-matching solve of e_tz + z h_tx = 0 for the reflected Floquet amplitudes.
// wavelength is measured in the same units as the profile abscissae.
ScatteringResult scatter(const ImpedanceProfile& profile, double theta_i_deg,
                         const AnalysisConfig& cfg = {}, double wavelength = 1.0);

enum class Dispersion { None, Linear };

std::string_view to_string(Dispersion d) noexcept;
Dispersion parse_dispersion(std::string_view text);  // throws InvalidArgument

inline constexpr int kResponseOrderMin = -3;
inline constexpr int kResponseOrderMax = 3;
inline constexpr std::size_t kResponseOrders = 7;

struct SweepColumn {
  double k_factor = 1.0;
  bool valid = false;
  std::array<double, kResponseOrders> efficiencies{};  // orders -3..+3
  double power_balance = 0.0;
  std::string error;  // set when invalid
};

// Profile at frequency factor f: reactance X (none) or X f (linear); the real part is kept.
ImpedanceProfile disperse_profile(const ImpedanceProfile& profile, double k_factor, Dispersion d);

std::vector<SweepColumn> frequency_sweep(const ImpedanceProfile& profile,
                                         const std::vector<double>& k_factors, double theta_i_deg,
                                         Dispersion dispersion = Dispersion::None,
                                         const AnalysisConfig& cfg = {});

struct DeflectionPoint {
  double theta_r_deg = 0.0;
  double efficiency = 0.0;
  double power_balance = 0.0;
};

// Target-order efficiency of the reactive-clamped two-wave design for every theta_r.
std::vector<DeflectionPoint> deflection_curve(double theta_i_deg, const std::vector<double>& theta_r_deg,
                                              const AnalysisConfig& cfg = {},
                                              std::size_t profile_samples = 256);

}  // namespace metarefl

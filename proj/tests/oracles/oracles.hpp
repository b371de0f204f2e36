#pragma once

// Independent reference computations. Nothing here calls into metarefl; every
// formula is evaluated directly in std::complex so test expectations do not
// share code paths with the implementation under test.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;

inline double rad(double deg) { return deg * pi / 180.0; }

// Normal wavenumber from the principal complex square root, conjugated onto the
// decaying branch when the argument is negative.
inline cd normal_wavenumber(double kx) {
  const cd root = std::sqrt(cd(1.0 - kx * kx, 0.0));
  return std::conj(root);
}

struct Plane {
  double sin_i = 0.0;
  double cos_i = 1.0;
  double eta = 1.0;
  double e0 = 1.0;
  double k = 2.0 * pi;
};

struct Mode {
  double kx = 0.0;
  cd amplitude;
};

struct Tangential {
  cd e;
  cd h;
};

// Total tangential fields at one abscissa by explicit summation.
inline Tangential fields(const Plane& p, const std::vector<Mode>& modes, double x) {
  const cd j(0.0, 1.0);
  const cd inc = p.e0 * std::exp(-j * p.k * p.sin_i * x);
  Tangential t{inc, -p.cos_i * inc / p.eta};
  for (const Mode& m : modes) {
    const cd w = m.amplitude * std::exp(-j * p.k * m.kx * x);
    t.e += w;
    t.h += normal_wavenumber(m.kx) * w / p.eta;
  }
  return t;
}

inline double sy(const Tangential& t) { return 0.5 * std::real(t.e * std::conj(t.h)); }

// Rectangle rule over one period; exact for periodic trigonometric integrands
// whose bandwidth stays below the sample count.
inline double mean_sy(const Plane& p, const std::vector<Mode>& modes, double period, int samples) {
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) acc += sy(fields(p, modes, period * i / samples));
  return acc / samples;
}

// Specular coefficient of a homogeneous surface with normalized impedance z:
// (1 + A) + z (-cos + A cos) = 0 with eta = 1.
inline cd uniform_reflection(cd z, double theta_deg) {
  const double c = std::cos(rad(theta_deg));
  return -(1.0 - z * c) / (1.0 + z * c);
}

// || a^H (a x - b) || for a dense row-major complex system.
inline double normal_equation_residual(const std::vector<std::vector<cd>>& a, const std::vector<cd>& x,
                                       const std::vector<cd>& b) {
  const std::size_t rows = a.size(), cols = x.size();
  std::vector<cd> r(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    cd s = -b[i];
    for (std::size_t c = 0; c < cols; ++c) s += a[i][c] * x[c];
    r[i] = s;
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    cd s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += std::conj(a[i][c]) * r[i];
    acc += std::norm(s);
  }
  return std::sqrt(acc);
}

// Column-by-column central differences with a fixed absolute step.
inline std::vector<std::vector<double>> central_jacobian(
    const std::function<std::vector<double>(const std::vector<double>&)>& f, std::vector<double> x,
    double h) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> jac;
  for (std::size_t c = 0; c < n; ++c) {
    const double keep = x[c];
    x[c] = keep + h;
    const std::vector<double> up = f(x);
    x[c] = keep - h;
    const std::vector<double> dn = f(x);
    x[c] = keep;
    if (jac.empty()) jac.assign(up.size(), std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < up.size(); ++r) jac[r][c] = (up[r] - dn[r]) / (2.0 * h);
  }
  return jac;
}

}  // namespace oracle

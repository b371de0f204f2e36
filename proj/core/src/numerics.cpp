#include "metarefl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

bool all_finite(const RealVector& v) { return v.allFinite(); }

RealVector checked_residual(const ResidualFn& residual, const RealVector& x) {
  RealVector r = residual(x);
  if (!all_finite(r)) fail(ErrorCode::NonFiniteResidual, "residual function returned non-finite values");
  return r;
}

}  // namespace

LeastSquaresSolution solve_least_squares(const ComplexMatrix& a, const ComplexVector& b) {
  if (a.rows() < a.cols() || a.cols() == 0) {
    fail(ErrorCode::InvalidArgument, "least squares needs rows >= cols > 0");
  }
  if (b.size() != a.rows()) fail(ErrorCode::InvalidArgument, "rhs length does not match rows");

  Eigen::ColPivHouseholderQR<ComplexMatrix> qr(a);
  const Eigen::Index n = a.cols();
  const ComplexMatrix r = qr.matrixR().topLeftCorner(n, n).triangularView<Eigen::Upper>();
  const Eigen::VectorXd sv = Eigen::JacobiSVD<ComplexMatrix>(r).singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxCondition)) {
    fail(ErrorCode::RankDeficient, "condition estimate " + std::to_string(cond) + " exceeds 1e12");
  }

  LeastSquaresSolution out;
  out.x = qr.solve(b);
  out.condition = cond;
  out.residual_norm = (a * out.x - b).norm();
  return out;
}

void LmConfig::validate() const {
  if (max_iter <= 0 || !(lambda0 > 0.0) || !(rel_tol > 0.0) || !(step_tol > 0.0) ||
      !(lambda_down > 0.0) || !(lambda_down < 1.0) || !(lambda_up > 1.0)) {
    fail(ErrorCode::InvalidArgument, "invalid Levenberg-Marquardt configuration");
  }
}

LmResult lm_minimize(const ResidualFn& residual, const JacobianFn& jacobian, const RealVector& x0,
                     const LmConfig& cfg) {
  cfg.validate();
  constexpr double kLambdaMax = 1e16;

  LmResult out;
  out.x = x0;
  RealVector r = checked_residual(residual, out.x);
  if (r.size() < x0.size()) {
    fail(ErrorCode::InvalidArgument, "fewer residuals than unknowns");
  }
  double f = r.squaredNorm();
  out.history.push_back(f);

  if (x0.size() == 0) {
    out.converged = true;
    out.stop = LmStop::StepSize;
    return out;
  }

  double lambda = cfg.lambda0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    out.iterations = it + 1;
    if (f == 0.0) {
      out.converged = true;
      out.stop = LmStop::ZeroObjective;
      return out;
    }
    const RealMatrix jac = jacobian(out.x);
    const RealMatrix jtj = jac.transpose() * jac;
    const RealVector g = jac.transpose() * r;
    if (!jtj.allFinite() || !g.allFinite()) {
      fail(ErrorCode::NonFiniteResidual, "jacobian returned non-finite values");
    }
    if (g.lpNorm<Eigen::Infinity>() == 0.0) {
      out.converged = true;
      out.stop = LmStop::StepSize;
      return out;
    }
    RealVector diag = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));

    bool accepted = false;
    while (!accepted) {
      RealMatrix damped = jtj;
      damped.diagonal() += lambda * diag;
      const RealVector step = damped.ldlt().solve(-g);
      const RealVector trial = out.x + step;
      const RealVector r_trial = checked_residual(residual, trial);
      const double f_trial = r_trial.squaredNorm();

      if (f_trial < f) {
        const double step_norm = step.norm();
        const double rel_change = (f - f_trial) / f;
        out.x = trial;
        r = r_trial;
        f = f_trial;
        out.history.push_back(f);
        lambda = std::max(lambda * cfg.lambda_down, 1e-15);
        accepted = true;
        if (rel_change <= cfg.rel_tol) {
          out.converged = true;
          out.stop = LmStop::RelativeChange;
          return out;
        }
        if (step_norm <= cfg.step_tol * (out.x.norm() + cfg.step_tol)) {
          out.converged = true;
          out.stop = LmStop::StepSize;
          return out;
        }
      } else {
        lambda *= cfg.lambda_up;
        if (lambda > kLambdaMax) {
          // No descent direction left at working precision.
          out.converged = true;
          out.stop = LmStop::DampingSaturated;
          return out;
        }
      }
    }
  }
  out.converged = false;
  out.stop = LmStop::MaxIterations;
  return out;
}

RealMatrix fd_jacobian(const ResidualFn& residual, const RealVector& x, std::optional<double> h) {
  const double step = h.value_or(1e-6 * std::max(1.0, x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0));
  if (!(step > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be positive");
  const RealVector r0 = checked_residual(residual, x);
  RealMatrix jac(r0.size(), x.size());
  RealVector xp = x;
  for (Eigen::Index q = 0; q < x.size(); ++q) {
    xp(q) = x(q) + step;
    const RealVector rp = checked_residual(residual, xp);
    xp(q) = x(q) - step;
    const RealVector rm = checked_residual(residual, xp);
    xp(q) = x(q);
    jac.col(q) = (rp - rm) / (2.0 * step);
  }
  return jac;
}

std::vector<std::complex<double>> trig_resample(std::span<const std::complex<double>> samples,
                                                std::size_t m) {
  using C = std::complex<double>;
  const std::size_t n = samples.size();
  if (n == 0 || m == 0) fail(ErrorCode::InvalidArgument, "trig_resample needs non-empty input and output");

  // Coefficients for k = -floor(n/2) .. ceil(n/2)-1, stored by signed index.
  const int lo = -static_cast<int>(n / 2);
  const int hi = static_cast<int>((n - 1) / 2);
  std::vector<C> coeff(n);
  for (int k = lo; k <= hi; ++k) {
    C acc(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double ph = -kTwoPi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(n);
      acc += samples[j] * std::polar(1.0, ph);
    }
    coeff[static_cast<std::size_t>(k - lo)] = acc / static_cast<double>(n);
  }
  const bool even = n % 2 == 0;
  std::vector<C> out(m);
  for (std::size_t q = 0; q < m; ++q) {
    const double t = static_cast<double>(q) / static_cast<double>(m);
    C acc(0.0, 0.0);
    for (int k = lo; k <= hi; ++k) {
      if (even && k == lo) continue;
      acc += coeff[static_cast<std::size_t>(k - lo)] * std::polar(1.0, kTwoPi * k * t);
    }
    if (even) {
      // Nyquist term split into +/- n/2 halves: c cos(pi n t)
      acc += coeff[0] * std::cos(kTwoPi * (static_cast<double>(n) / 2.0) * t);
    }
    out[q] = acc;
  }
  return out;
}

}  // namespace metarefl

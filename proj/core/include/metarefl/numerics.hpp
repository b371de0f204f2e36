#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace metarefl {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

struct LeastSquaresSolution {
  ComplexVector x;
  double condition = 0.0;      // 2-norm condition estimate of the system matrix
  double residual_norm = 0.0;  // ||a x - b||_2
};

inline constexpr double kMaxCondition = 1e12;

// Column-pivoted Householder QR; the condition estimate comes from the
// singular values of the triangular factor. Throws RankDeficient above 1e12.
LeastSquaresSolution solve_least_squares(const ComplexMatrix& a, const ComplexVector& b);

struct LmConfig {
  int max_iter = 500;
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double rel_tol = 1e-10;
  double step_tol = 1e-12;

  void validate() const;
};

enum class LmStop {
  RelativeChange,
  StepSize,
  ZeroObjective,
  DampingSaturated,
  MaxIterations,
};

struct LmResult {
  RealVector x;
  std::vector<double> history;  // objective sum(r^2) of every accepted iterate, starting at x0
  bool converged = false;
  int iterations = 0;
  LmStop stop = LmStop::MaxIterations;
};

using ResidualFn = std::function<RealVector(const RealVector&)>;
using JacobianFn = std::function<RealMatrix(const RealVector&)>;

// Levenberg-Marquardt on sum_p r_p(x)^2 with Marquardt diagonal scaling.
// Rejected trial steps raise the damping; only objective-decreasing steps are taken.
LmResult lm_minimize(const ResidualFn& residual, const JacobianFn& jacobian,
                     const RealVector& x0, const LmConfig& cfg = {});

// Central differences. Default step is 1e-6 max(1, ||x||_inf).
RealMatrix fd_jacobian(const ResidualFn& residual, const RealVector& x,
                       std::optional<double> h = std::nullopt);

// Band-limited (trigonometric) interpolation of N uniform periodic samples onto
// M uniform samples of the same period. The Nyquist bin is split symmetrically
// for even N so that real inputs stay real.
std::vector<std::complex<double>> trig_resample(std::span<const std::complex<double>> samples,
                                                std::size_t m);

}  // namespace metarefl

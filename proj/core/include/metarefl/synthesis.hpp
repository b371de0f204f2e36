#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "metarefl/em.hpp"
#include "metarefl/numerics.hpp"

namespace metarefl {

struct SynthesisConfig {
  int m_evanescent = 8;
  bool optimize_target_phase = true;
  int grid_p = 256;
  LmConfig lm;
  double reactive_tol = 1e-2;  // pass threshold on max |Re z| / eta
  double residual_tol = 1e-3;  // pass threshold on max normalized |S_y|
  // Second least-squares pass that appends (residual_tol / reactive_tol) * Re z rows
  // to the normalized S_y rows, started from the pure power-density optimum.
  bool reactive_refinement = true;
  // Extra stage-1 starts: a warm chain over M' = 0..M-1 and `restarts` seeded
  // uniform draws in [-restart_scale, restart_scale] (target phase in [0, 2 pi)).
  bool continuation = true;
  int restarts = 16;
  double restart_scale = 0.3;
  std::uint64_t seed = 1;
};

// Frozen problem data shared by residuals() and analytic_jacobian().
// Unknown layout: [phi_t]? then (Re A_m, Im A_m) for each evanescent order in
// order of increasing |kx|.
struct SynthesisContext {
  IncidenceSpec incidence;
  HarmonicBasis basis;
  std::vector<double> x;                 // collocation grid
  std::size_t target_index = 0;          // basis index of the anomalous order
  double target_magnitude = 0.0;         // |A_t|, fixed
  bool optimize_phase = true;
  std::vector<int> evanescent_orders;    // unknown orders, in layout order
  std::vector<std::size_t> evanescent_index;
  double normalization = 1.0;            // r_p = normalization * Re(E H*)
  double reactive_weight = 0.1;
  double h_floor = 1e-9;

  // Precomputed per grid point.
  ComplexVector inc_e, inc_h;
  ComplexMatrix phase;      // P x (1 + M): column 0 target, then evanescent orders
  ComplexVector ky_over_eta;  // 1 + M

  std::size_t unknown_count() const noexcept {
    return (optimize_phase ? 1u : 0u) + 2u * evanescent_orders.size();
  }
  std::size_t grid_size() const noexcept { return x.size(); }
};

// M evanescent orders of smallest |kx|; ties go to the side of the target order.
std::vector<int> select_evanescent_orders(const IncidenceSpec& incidence, int m);

SynthesisContext make_synthesis_context(const IncidenceSpec& incidence, const SynthesisConfig& cfg,
                                        std::optional<double> target_magnitude = std::nullopt);

// Basis amplitudes (target, evanescent unknowns, zeros elsewhere) for an unknown vector.
std::vector<cplx> amplitudes_from_unknowns(const RealVector& unknowns, const SynthesisContext& ctx);

// r_p = S_y(x_p) 2 eta / (e0^2 cos theta_i).
RealVector residuals(const RealVector& unknowns, const SynthesisContext& ctx);
RealMatrix analytic_jacobian(const RealVector& unknowns, const SynthesisContext& ctx);

// [r_p ; w Re z_p]; rows with |H_tx| below h_floor are zero.
RealVector refinement_residuals(const RealVector& unknowns, const SynthesisContext& ctx);
RealMatrix refinement_jacobian(const RealVector& unknowns, const SynthesisContext& ctx);

struct SynthesisResult {
  FieldSolution solution;
  ImpedanceProfile profile;
  std::vector<double> s_y;  // S_y on the collocation grid
  double max_local_residual = 0.0;
  double reactive_impurity = 0.0;
  int iterations = 0;  // chosen stage-1 run plus refinement
  int starts = 0;      // stage-1 starts tried
  bool converged = false;  // stop flag of the chosen power-density run
  std::vector<double> objective_history;   // sum r_p^2 of the power-density pass
  std::vector<double> refinement_history;  // objective of the refinement pass, if run
  bool refined = false;
  bool refinement_converged = false;
  std::vector<int> evanescent_orders;
  double target_phase = 0.0;
  RealVector unknowns;         // final unknown vector
  RealVector stage1_unknowns;  // optimum of the power-density pass (warm-start seed)
};

SynthesisResult synthesize(const IncidenceSpec& incidence, const SynthesisConfig& cfg);

// Warm-started variant: initial (zero-padded or truncated to the unknown layout)
// replaces the zero start; the continuation and seeded starts still run.
SynthesisResult synthesize(const IncidenceSpec& incidence, const SynthesisConfig& cfg,
                           const RealVector& initial);

struct ModeSweepPoint {
  int m = 0;
  double max_local_residual = 0.0;
  double best_residual = 0.0;  // min over all M' <= M
  double stage1_objective = 0.0;
  double reactive_impurity = 0.0;
  bool converged = false;
};

struct ModeSweepResult {
  std::vector<ModeSweepPoint> points;
  std::optional<int> first_passing;
};

ModeSweepResult mode_sweep(const IncidenceSpec& incidence, int m_max, double tol,
                           const SynthesisConfig& cfg_template);

}  // namespace metarefl

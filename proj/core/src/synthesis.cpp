#include "metarefl/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <tuple>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace {

struct TotalFields {
  ComplexVector e;
  ComplexVector h;
};

// Reflected amplitudes carried by the context columns: target, then evanescent orders.
ComplexVector column_amplitudes(const RealVector& u, const SynthesisContext& ctx) {
  const std::size_t m = ctx.evanescent_orders.size();
  ComplexVector a(static_cast<Eigen::Index>(1 + m));
  const double phi = ctx.optimize_phase ? u(0) : 0.0;
  a(0) = std::polar(ctx.target_magnitude, phi);
  const Eigen::Index off = ctx.optimize_phase ? 1 : 0;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Index q = off + 2 * static_cast<Eigen::Index>(i);
    a(static_cast<Eigen::Index>(1 + i)) = cplx(u(q), u(q + 1));
  }
  return a;
}

void check_layout(const RealVector& u, const SynthesisContext& ctx) {
  if (static_cast<std::size_t>(u.size()) != ctx.unknown_count()) {
    fail(ErrorCode::LayoutMismatch, "expected " + std::to_string(ctx.unknown_count()) +
                                        " unknowns, got " + std::to_string(u.size()));
  }
}

TotalFields total_fields(const RealVector& u, const SynthesisContext& ctx) {
  const ComplexVector a = column_amplitudes(u, ctx);
  TotalFields f;
  const ComplexVector modal = ctx.phase * a;
  const ComplexVector modal_h = ctx.phase * (ctx.ky_over_eta.array() * a.array()).matrix();
  f.e = ctx.inc_e + modal;
  f.h = ctx.inc_h + modal_h;
  return f;
}

// dE/du_q and dH/du_q for every unknown, P x n each.
std::pair<ComplexMatrix, ComplexMatrix> field_derivatives(const RealVector& u,
                                                          const SynthesisContext& ctx) {
  const Eigen::Index p = static_cast<Eigen::Index>(ctx.grid_size());
  const Eigen::Index n = static_cast<Eigen::Index>(ctx.unknown_count());
  ComplexMatrix de(p, n), dh(p, n);
  const cplx j(0.0, 1.0);
  Eigen::Index q = 0;
  if (ctx.optimize_phase) {
    const cplx at = std::polar(ctx.target_magnitude, u(0));
    de.col(q) = (j * at) * ctx.phase.col(0);
    dh.col(q) = (j * at * ctx.ky_over_eta(0)) * ctx.phase.col(0);
    ++q;
  }
  for (std::size_t i = 0; i < ctx.evanescent_orders.size(); ++i) {
    const Eigen::Index c = static_cast<Eigen::Index>(1 + i);
    de.col(q) = ctx.phase.col(c);
    dh.col(q) = ctx.ky_over_eta(c) * ctx.phase.col(c);
    de.col(q + 1) = j * ctx.phase.col(c);
    dh.col(q + 1) = (j * ctx.ky_over_eta(c)) * ctx.phase.col(c);
    q += 2;
  }
  return {std::move(de), std::move(dh)};
}

double target_phase_of(const RealVector& u, const SynthesisContext& ctx) {
  return ctx.optimize_phase ? std::remainder(u(0), 2.0 * kPi) : 0.0;
}

RealVector fit_layout(const RealVector& initial, std::size_t n) {
  RealVector x = RealVector::Zero(static_cast<Eigen::Index>(n));
  const Eigen::Index keep = std::min<Eigen::Index>(initial.size(), x.size());
  x.head(keep) = initial.head(keep);
  return x;
}

}  // namespace

std::vector<int> select_evanescent_orders(const IncidenceSpec& incidence, int m) {
  if (m < 0) fail(ErrorCode::InvalidArgument, "m_evanescent must be >= 0");
  const HarmonicBasis probe = build_basis(incidence, 1);
  const int target = *probe.target_order;
  const double step = incidence.wavelength / probe.period;
  const int reach = m + static_cast<int>(std::ceil(2.0 / step)) + 2;

  std::vector<std::tuple<double, int, int>> cand;  // (|kx|, -n*target, n)
  for (int n = -reach; n <= reach; ++n) {
    const double kx = probe.sin_i + n * step;
    if (std::abs(kx) > 1.0) cand.emplace_back(std::abs(kx), -n * target, n);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<int> orders;
  orders.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) orders.push_back(std::get<2>(cand[static_cast<std::size_t>(i)]));
  return orders;
}

SynthesisContext make_synthesis_context(const IncidenceSpec& incidence, const SynthesisConfig& cfg,
                                        std::optional<double> target_magnitude) {
  incidence.validate();
  cfg.lm.validate();
  if (!(cfg.reactive_tol > 0.0) || !(cfg.residual_tol > 0.0)) {
    fail(ErrorCode::InvalidArgument, "tolerances must be positive");
  }
  if (cfg.restarts < 0 || !(cfg.restart_scale > 0.0) || !std::isfinite(cfg.restart_scale)) {
    fail(ErrorCode::InvalidArgument, "restarts must be >= 0 and restart_scale positive");
  }
  SynthesisContext ctx;
  ctx.incidence = incidence;
  ctx.optimize_phase = cfg.optimize_target_phase;
  ctx.evanescent_orders = select_evanescent_orders(incidence, cfg.m_evanescent);

  int n_max = 1;
  for (int n : ctx.evanescent_orders) n_max = std::max(n_max, std::abs(n));
  ctx.basis = build_basis(incidence, n_max);
  if (cfg.grid_p < 0 || static_cast<std::size_t>(cfg.grid_p) < min_samples(ctx.basis)) {
    fail(ErrorCode::InvalidArgument, "grid_p " + std::to_string(cfg.grid_p) + " below floor " +
                                         std::to_string(min_samples(ctx.basis)) + " for n_max " +
                                         std::to_string(n_max));
  }
  ctx.target_index = ctx.basis.index_of(*ctx.basis.target_order);
  for (int n : ctx.evanescent_orders) ctx.evanescent_index.push_back(ctx.basis.index_of(n));

  ctx.target_magnitude =
      target_magnitude.value_or(incidence.e0 * std::sqrt(incidence.cos_i() / incidence.cos_r()));
  ctx.normalization = incidence.eta / (incidence.e0 * incidence.e0 * incidence.cos_i());
  ctx.reactive_weight = cfg.residual_tol / cfg.reactive_tol;
  ctx.h_floor = 1e-9 * incidence.e0 / incidence.eta;

  ctx.x = uniform_grid(ctx.basis.period, static_cast<std::size_t>(cfg.grid_p));
  const Eigen::Index p = cfg.grid_p;
  const Eigen::Index cols = static_cast<Eigen::Index>(1 + ctx.evanescent_orders.size());
  const double k = incidence.wavenumber();
  const double sin_i = incidence.sin_i();
  const double cos_i = incidence.cos_i();

  ctx.inc_e.resize(p);
  ctx.inc_h.resize(p);
  ctx.phase.resize(p, cols);
  ctx.ky_over_eta.resize(cols);
  std::vector<const FloquetHarmonic*> used{&ctx.basis.harmonics[ctx.target_index]};
  for (std::size_t idx : ctx.evanescent_index) used.push_back(&ctx.basis.harmonics[idx]);
  for (Eigen::Index c = 0; c < cols; ++c) ctx.ky_over_eta(c) = used[static_cast<std::size_t>(c)]->ky / incidence.eta;

  for (Eigen::Index i = 0; i < p; ++i) {
    const double xi = ctx.x[static_cast<std::size_t>(i)];
    const cplx ph = std::polar(1.0, -k * sin_i * xi);
    ctx.inc_e(i) = incidence.e0 * ph;
    ctx.inc_h(i) = (-incidence.e0 * cos_i / incidence.eta) * ph;
    for (Eigen::Index c = 0; c < cols; ++c) {
      ctx.phase(i, c) = std::polar(1.0, -k * used[static_cast<std::size_t>(c)]->kx * xi);
    }
  }
  return ctx;
}

std::vector<cplx> amplitudes_from_unknowns(const RealVector& unknowns, const SynthesisContext& ctx) {
  check_layout(unknowns, ctx);
  const ComplexVector a = column_amplitudes(unknowns, ctx);
  std::vector<cplx> amps(ctx.basis.size(), cplx(0.0, 0.0));
  amps[ctx.target_index] = a(0);
  for (std::size_t i = 0; i < ctx.evanescent_index.size(); ++i) {
    amps[ctx.evanescent_index[i]] = a(static_cast<Eigen::Index>(1 + i));
  }
  return amps;
}

RealVector residuals(const RealVector& unknowns, const SynthesisContext& ctx) {
  check_layout(unknowns, ctx);
  const TotalFields f = total_fields(unknowns, ctx);
  return ctx.normalization * (f.e.array() * f.h.array().conjugate()).real().matrix();
}

RealMatrix analytic_jacobian(const RealVector& unknowns, const SynthesisContext& ctx) {
  check_layout(unknowns, ctx);
  const TotalFields f = total_fields(unknowns, ctx);
  const auto [de, dh] = field_derivatives(unknowns, ctx);
  RealMatrix jac(de.rows(), de.cols());
  for (Eigen::Index q = 0; q < de.cols(); ++q) {
    jac.col(q) = ctx.normalization *
                 (de.col(q).array() * f.h.array().conjugate() + f.e.array() * dh.col(q).array().conjugate())
                     .real()
                     .matrix();
  }
  return jac;
}

RealVector refinement_residuals(const RealVector& unknowns, const SynthesisContext& ctx) {
  check_layout(unknowns, ctx);
  const TotalFields f = total_fields(unknowns, ctx);
  const Eigen::Index p = static_cast<Eigen::Index>(ctx.grid_size());
  RealVector r(2 * p);
  const double eta = ctx.incidence.eta;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double q = std::real(f.e(i) * std::conj(f.h(i)));
    const double s = std::norm(f.h(i));
    r(i) = ctx.normalization * q;
    r(p + i) = std::abs(f.h(i)) < ctx.h_floor ? 0.0 : -ctx.reactive_weight * q / (eta * s);
  }
  return r;
}

RealMatrix refinement_jacobian(const RealVector& unknowns, const SynthesisContext& ctx) {
  check_layout(unknowns, ctx);
  const TotalFields f = total_fields(unknowns, ctx);
  const auto [de, dh] = field_derivatives(unknowns, ctx);
  const Eigen::Index p = static_cast<Eigen::Index>(ctx.grid_size());
  const double eta = ctx.incidence.eta;
  RealMatrix jac = RealMatrix::Zero(2 * p, de.cols());
  for (Eigen::Index i = 0; i < p; ++i) {
    const cplx e = f.e(i), h = f.h(i);
    const double q = std::real(e * std::conj(h));
    const double s = std::norm(h);
    const bool skip = std::abs(h) < ctx.h_floor;
    for (Eigen::Index c = 0; c < de.cols(); ++c) {
      const double dq = std::real(de(i, c) * std::conj(h) + e * std::conj(dh(i, c)));
      jac(i, c) = ctx.normalization * dq;
      if (!skip) {
        const double ds = 2.0 * std::real(std::conj(h) * dh(i, c));
        jac(p + i, c) = -ctx.reactive_weight * (dq * s - q * ds) / (eta * s * s);
      }
    }
  }
  return jac;
}

SynthesisResult synthesize(const IncidenceSpec& incidence, const SynthesisConfig& cfg) {
  return synthesize(incidence, cfg, RealVector());
}

namespace {

// Both optimizer stages; fills the history, iteration and unknown fields only.
SynthesisResult optimize(const IncidenceSpec& incidence, const SynthesisConfig& cfg,
                         const SynthesisContext& ctx, const RealVector& x0) {
  const ResidualFn res = [&ctx](const RealVector& u) { return residuals(u, ctx); };
  const JacobianFn jac = [&ctx](const RealVector& u) { return analytic_jacobian(u, ctx); };

  const auto run_stage1 = [&](const RealVector& start) {
    try {
      return lm_minimize(res, jac, start, cfg.lm);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteResidual) fail(ErrorCode::OptimizerFailed, e.detail());
      throw;
    }
  };

  // Stage 1 has many local minima. Every start below is deterministic; the lowest
  // objective wins and is the only one refined.
  SynthesisResult out;
  LmResult stage1 = run_stage1(x0);
  out.starts = 1;
  const auto consider = [&](const RealVector& start) {
    LmResult trial = run_stage1(start);
    ++out.starts;
    if (trial.history.back() < stage1.history.back()) stage1 = std::move(trial);
  };
  const Eigen::Index n = static_cast<Eigen::Index>(ctx.unknown_count());
  if (n > 0 && cfg.continuation && cfg.m_evanescent > 0) {
    SynthesisConfig smaller = cfg;
    smaller.reactive_refinement = false;
    smaller.continuation = false;
    smaller.restarts = 0;
    RealVector chain;
    for (int m = 0; m < cfg.m_evanescent; ++m) {
      smaller.m_evanescent = m;
      chain = synthesize(incidence, smaller, chain).stage1_unknowns;
    }
    consider(fit_layout(chain, ctx.unknown_count()));
  }
  if (n > 0 && cfg.restarts > 0) {
    std::mt19937_64 gen(cfg.seed);
    const auto uniform = [&gen] { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };
    for (int k = 0; k < cfg.restarts; ++k) {
      RealVector start(n);
      for (Eigen::Index i = 0; i < n; ++i) start(i) = cfg.restart_scale * (2.0 * uniform() - 1.0);
      if (ctx.optimize_phase) start(0) = 2.0 * kPi * uniform();
      consider(start);
    }
  }
  out.objective_history = stage1.history;
  out.stage1_unknowns = stage1.x;
  out.iterations = stage1.iterations;
  out.converged = stage1.converged;
  RealVector u = stage1.x;

  if (cfg.reactive_refinement && ctx.unknown_count() > 0) {
    const ResidualFn rres = [&ctx](const RealVector& v) { return refinement_residuals(v, ctx); };
    const JacobianFn rjac = [&ctx](const RealVector& v) { return refinement_jacobian(v, ctx); };
    LmResult stage2;
    try {
      stage2 = lm_minimize(rres, rjac, u, cfg.lm);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteResidual) fail(ErrorCode::OptimizerFailed, e.detail());
      throw;
    }
    out.refinement_history = stage2.history;
    out.iterations += stage2.iterations;
    out.refinement_converged = stage2.converged;
    out.refined = true;
    u = stage2.x;
  }
  out.unknowns = u;
  return out;
}

}  // namespace

SynthesisResult synthesize(const IncidenceSpec& incidence, const SynthesisConfig& cfg,
                           const RealVector& initial) {
  const SynthesisContext ctx = make_synthesis_context(incidence, cfg);
  const RealVector x0 = fit_layout(initial, ctx.unknown_count());

  // Designs aimed at order -1 are solved as their mirror image x -> -x, whose layout
  // holds the negated orders in the same slots. The optimizer path then matches the
  // mirrored design exactly instead of diverging on roundoff in flat valleys.
  SynthesisResult out;
  if (*ctx.basis.target_order < 0) {
    IncidenceSpec mirrored = incidence;
    mirrored.theta_i_deg = -incidence.theta_i_deg;
    mirrored.theta_r_deg = -incidence.theta_r_deg;
    const SynthesisContext mctx = make_synthesis_context(mirrored, cfg);
    for (std::size_t i = 0; i < ctx.evanescent_orders.size(); ++i) {
      if (mctx.evanescent_orders[i] != -ctx.evanescent_orders[i]) {
        fail(ErrorCode::OptimizerFailed, "mirrored order layout does not match");
      }
    }
    out = optimize(mirrored, cfg, mctx, x0);
  } else {
    out = optimize(incidence, cfg, ctx, x0);
  }
  const RealVector u = out.unknowns;


  out.target_phase = target_phase_of(u, ctx);
  out.evanescent_orders = ctx.evanescent_orders;
  out.solution.basis = ctx.basis;
  out.solution.incidence = incidence;
  out.solution.amplitudes = amplitudes_from_unknowns(u, ctx);

  const FieldSamples samples = eval_fields_at(out.solution, ctx.x);
  out.s_y = poynting_normal(samples);
  const RealVector r = residuals(u, ctx);
  if (!r.allFinite()) fail(ErrorCode::OptimizerFailed, "non-finite residuals at the optimum");
  out.max_local_residual = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;

  out.profile = surface_impedance(samples);
  double impurity = 0.0;
  for (std::size_t i = 0; i < out.profile.size(); ++i) {
    if (!out.profile.singular[i]) impurity = std::max(impurity, std::abs(out.profile.z[i].real()));
  }
  out.reactive_impurity = impurity;
  return out;
}

ModeSweepResult mode_sweep(const IncidenceSpec& incidence, int m_max, double tol,
                           const SynthesisConfig& cfg_template) {
  if (m_max < 0) fail(ErrorCode::InvalidArgument, "m_max must be >= 0");
  ModeSweepResult out;
  RealVector seed;
  double best = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= m_max; ++m) {
    SynthesisConfig cfg = cfg_template;
    cfg.m_evanescent = m;
    const SynthesisResult res = synthesize(incidence, cfg, seed);
    seed = res.stage1_unknowns;
    best = std::min(best, res.max_local_residual);
    ModeSweepPoint pt;
    pt.m = m;
    pt.max_local_residual = res.max_local_residual;
    pt.best_residual = best;
    pt.stage1_objective = res.objective_history.back();
    pt.reactive_impurity = res.reactive_impurity;
    pt.converged = res.converged;
    out.points.push_back(pt);
    if (!out.first_passing && res.max_local_residual < tol) out.first_passing = m;
  }
  return out;
}

}  // namespace metarefl

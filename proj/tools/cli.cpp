#include "cli.hpp"

#include <fmt/format.h>
#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "metarefl/analysis.hpp"
#include "metarefl/dataset.hpp"
#include "metarefl/errors.hpp"
#include "metarefl/serialize.hpp"
#include "metarefl/service.hpp"
#include "metarefl/synthesis.hpp"

namespace metarefl::cli {

namespace fs = std::filesystem;

namespace {

int code(CliExit e) { return static_cast<int>(e); }

CliExit exit_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidGeometry:
      return CliExit::Physics;
    case ErrorCode::IoError:
    case ErrorCode::SchemaError:
    case ErrorCode::DigestMismatch:
      return CliExit::Io;
    default:
      return CliExit::Solver;
  }
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

fs::path with_suffix(const std::string& prefix, const std::string& suffix) { return fs::path(prefix + suffix); }

std::string order_table(const ScatteringResult& res) {
  std::string s = "n,angle_or_evanescent,re_a,im_a,efficiency\n";
  for (std::size_t i = 0; i < res.basis.size(); ++i) {
    const FloquetHarmonic& h = res.basis.harmonics[i];
    s += fmt::format("{},{},{},{},{}\n", h.n, h.angle_deg ? num(*h.angle_deg) : std::string("evanescent"),
                     num(res.amplitudes[i].real()), num(res.amplitudes[i].imag()), num(res.efficiencies[i]));
  }
  return s;
}

json scatter_summary(const ScatteringResult& res) {
  return json{{"power_balance", res.power_balance},     {"absorbed_fraction", res.absorbed_fraction},
              {"condition", res.condition},             {"bc_residual", res.bc_residual},
              {"wavelength", res.basis.wavelength},     {"collocation_rows", res.collocation_rows},
              {"excluded_singular", res.excluded_singular}, {"resampled", res.resampled}};
}

struct SynthesizeArgs {
  double theta_i = 0.0, theta_r = 0.0;
  int modes = 8, grid = 256;
  bool optimize_phase = true, refine = true;
  std::string out = "result";
};

int cmd_synthesize(const SynthesizeArgs& a, std::ostream& out) {
  IncidenceSpec inc;
  inc.theta_i_deg = a.theta_i;
  inc.theta_r_deg = a.theta_r;
  SynthesisConfig cfg;
  cfg.m_evanescent = a.modes;
  cfg.grid_p = a.grid;
  cfg.optimize_target_phase = a.optimize_phase;
  cfg.reactive_refinement = a.refine;
  const SynthesisResult res = synthesize(inc, cfg);

  const json summary = synthesis_summary(inc, cfg, res);
  write_file(with_suffix(a.out, ".summary"), summary.dump(2) + "\n");
  std::ostringstream csv;
  write_profile_csv(csv, res.profile, res.s_y);
  write_file(with_suffix(a.out, ".profile.csv"), csv.str());

  out << fmt::format("max_local_residual {}\nreactive_impurity {}\nM {}\niterations {}\nconverged {}\n",
                     num(res.max_local_residual), num(res.reactive_impurity), a.modes, res.iterations,
                     res.converged ? "true" : "false");
  return code(CliExit::Success);
}

struct AnalyzeArgs {
  std::string profile;
  double theta_i = 0.0;
  int orders = 20, colloc = 4;
  std::vector<double> k_factors;
  std::string dispersion = "none";
  bool reactive = false;
  std::string out = "scatter";
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  ImpedanceProfile profile = read_profile_csv(a.profile);
  if (a.reactive) profile = clamp_reactive(profile);
  AnalysisConfig cfg;
  cfg.n_orders = a.orders;
  cfg.colloc_factor = a.colloc;
  const Dispersion disp = parse_dispersion(a.dispersion);

  json summary{{"profile", a.profile}, {"theta_i", a.theta_i}, {"n_orders", a.orders},
               {"colloc_factor", a.colloc}, {"reactive_clamp", a.reactive}};
  if (a.k_factors.empty()) {
    const ScatteringResult res = scatter(profile, a.theta_i, cfg);
    write_file(with_suffix(a.out, ".csv"), order_table(res));
    summary["result"] = scatter_summary(res);
    out << fmt::format("power_balance {}\n", num(res.power_balance));
    for (std::size_t i = 0; i < res.basis.size(); ++i) {
      if (res.basis.harmonics[i].propagating()) {
        out << fmt::format("order {} efficiency {}\n", res.basis.harmonics[i].n, num(res.efficiencies[i]));
      }
    }
  } else {
    summary["dispersion"] = a.dispersion;
    json tables = json::array();
    for (std::size_t i = 0; i < a.k_factors.size(); ++i) {
      const double f = a.k_factors[i];
      json entry{{"k_factor", f}};
      try {
        if (!(f > 0.0)) fail(ErrorCode::InvalidArgument, "k_factor must be positive");
        const ScatteringResult res = scatter(disperse_profile(profile, f, disp), a.theta_i, cfg, 1.0 / f);
        const fs::path table = with_suffix(a.out, fmt::format(".k{}.csv", i));
        write_file(table, order_table(res));
        entry["table"] = table.string();
        entry["result"] = scatter_summary(res);
        out << fmt::format("k_factor {} power_balance {}\n", num(f), num(res.power_balance));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::IoError) throw;
        entry["error"] = e.what();
        out << fmt::format("k_factor {} invalid: {}\n", num(f), e.what());
      }
      tables.push_back(entry);
    }
    summary["tables"] = tables;
  }
  write_file(with_suffix(a.out, ".summary"), summary.dump(2) + "\n");
  return code(CliExit::Success);
}

struct SweepArgs {
  std::string kind;
  double theta_i = 0.0, theta_r = 70.0;
  int m_max = 10, grid = 256, orders = 20;
  double tol = 1e-3;
  double from = 30.0, to = 80.0, step = 10.0;
  std::vector<double> theta_r_list;
  std::string out = "sweep";
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.kind == "modes") {
    IncidenceSpec inc;
    inc.theta_i_deg = a.theta_i;
    inc.theta_r_deg = a.theta_r;
    SynthesisConfig cfg;
    cfg.grid_p = a.grid;
    const ModeSweepResult sweep = mode_sweep(inc, a.m_max, a.tol, cfg);
    std::string csv = "m,max_local_residual,best_residual,stage1_objective,reactive_impurity,converged\n";
    for (const auto& p : sweep.points) {
      csv += fmt::format("{},{},{},{},{},{}\n", p.m, num(p.max_local_residual), num(p.best_residual),
                         num(p.stage1_objective), num(p.reactive_impurity), p.converged ? 1 : 0);
    }
    write_file(with_suffix(a.out, ".csv"), csv);
    out << "first_passing_m " << (sweep.first_passing ? std::to_string(*sweep.first_passing) : "none") << "\n";
    return code(CliExit::Success);
  }
  std::vector<double> angles = a.theta_r_list;
  if (angles.empty()) {
    if (!(a.step > 0.0)) fail(ErrorCode::InvalidArgument, "--theta-r-step must be positive");
    for (double t = a.from; t <= a.to + 1e-9; t += a.step) angles.push_back(t);
  }
  AnalysisConfig cfg;
  cfg.n_orders = a.orders;
  std::string csv = "theta_r,efficiency,power_balance\n";
  for (const auto& p : deflection_curve(a.theta_i, angles, cfg)) {
    csv += fmt::format("{},{},{}\n", num(p.theta_r_deg), num(p.efficiency), num(p.power_balance));
    out << fmt::format("theta_r {} efficiency {}\n", num(p.theta_r_deg), num(p.efficiency));
  }
  write_file(with_suffix(a.out, ".csv"), csv);
  return code(CliExit::Success);
}

int cmd_dataset(const std::string& config, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  json j;
  try {
    j = json::parse(read_text_file(config));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SchemaError, config + ": " + e.what());
  }
  SweepConfig cfg = sweep_config_from_json(j);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.out_dir.empty()) fail(ErrorCode::InvalidArgument, "no output directory given");
  const DatasetManifest m = generate_dataset(cfg, [&err](const DatasetFailure& f) {
    err << fmt::format("record ({}, {}) skipped: {}\n", num(f.theta_i), num(f.theta_r), f.error);
  });
  out << json{{"count", m.count},
              {"failures", m.failures.size()},
              {"seed", m.seed},
              {"digest", m.digest},
              {"records", m.records_path.string()},
              {"manifest", m.manifest_path.string()}}
             .dump(2)
      << "\n";
  return code(CliExit::Success);
}

int cmd_serve(const ServiceConfig& cfg, std::ostream& out, std::ostream& err) {
  // Signals are consumed by a dedicated thread; block them before the server spawns workers.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigset_t old;
  pthread_sigmask(SIG_BLOCK, &set, &old);

  int rc = code(CliExit::Success);
  {
    EmService svc(cfg);
    if (!svc.bind()) {
      err << fmt::format("cannot bind {}:{}\n", cfg.host, cfg.port);
      pthread_sigmask(SIG_SETMASK, &old, nullptr);
      return code(CliExit::Io);
    }
    out << fmt::format("listening on {}:{}\n", cfg.host, svc.port()) << std::flush;
    std::atomic<bool> done{false};
    std::thread watcher([&] {
      const timespec tick{0, 200'000'000};
      while (!done.load()) {
        if (sigtimedwait(&set, nullptr, &tick) > 0) {
          svc.stop();
          return;
        }
      }
    });
    svc.serve();
    done = true;
    watcher.join();
    out << fmt::format("stopped; {} profiles in store\n", svc.store().size());
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  return rc;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"metarefl: synthesis and analysis of lossless anomalous-reflector impedance surfaces"};
  app.require_subcommand(1);

  SynthesizeArgs syn;
  auto* s = app.add_subcommand("synthesize", "Optimize Floquet amplitudes for local power conservation");
  s->add_option("--theta-i", syn.theta_i, "Incidence angle in degrees")->required();
  s->add_option("--theta-r", syn.theta_r, "Anomalous reflection angle in degrees")->required();
  s->add_option("--modes", syn.modes, "Number of evanescent orders used as unknowns")->capture_default_str();
  s->add_option("--grid", syn.grid, "Collocation points over one period")->capture_default_str();
  s->add_option("--optimize-phase", syn.optimize_phase, "Optimize the target-order phase (true/false)")
      ->capture_default_str();
  s->add_option("--refine", syn.refine, "Run the reactance refinement pass (true/false)")->capture_default_str();
  s->add_option("--out", syn.out, "Output prefix for <out>.summary and <out>.profile.csv")->capture_default_str();

  AnalyzeArgs ana;
  auto* a = app.add_subcommand("analyze", "Mode-matching scattering analysis of an impedance profile");
  a->add_option("--profile", ana.profile, "Profile CSV (x,re_z,im_z,singular,s_y)")->required();
  a->add_option("--theta-i", ana.theta_i, "Incidence angle in degrees")->required();
  a->add_option("--orders", ana.orders, "Truncation half-width N_a")->capture_default_str();
  a->add_option("--colloc", ana.colloc, "Collocation points per unknown")->capture_default_str();
  a->add_option("--k-factors", ana.k_factors, "Frequency factors; one table per factor")->delimiter(',');
  a->add_option("--dispersion", ana.dispersion, "Reactance dispersion under --k-factors: none or linear")
      ->check(CLI::IsMember({"none", "linear"}))
      ->capture_default_str();
  a->add_flag("--reactive", ana.reactive, "Drop the real part of z before solving");
  a->add_option("--out", ana.out, "Output prefix")->capture_default_str();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Mode-count or deflection-angle sweeps as CSV");
  w->add_option("--kind", sw.kind, "modes or deflection")->required()->check(CLI::IsMember({"modes", "deflection"}));
  w->add_option("--theta-i", sw.theta_i, "Incidence angle in degrees")->capture_default_str();
  w->add_option("--theta-r", sw.theta_r, "Design reflection angle (modes)")->capture_default_str();
  w->add_option("--m-max", sw.m_max, "Largest evanescent count (modes)")->capture_default_str();
  w->add_option("--tol", sw.tol, "Local residual pass threshold (modes)")->capture_default_str();
  w->add_option("--grid", sw.grid, "Collocation points (modes)")->capture_default_str();
  w->add_option("--theta-r-from", sw.from, "First reflection angle (deflection)")->capture_default_str();
  w->add_option("--theta-r-to", sw.to, "Last reflection angle (deflection)")->capture_default_str();
  w->add_option("--theta-r-step", sw.step, "Angle step (deflection)")->capture_default_str();
  w->add_option("--theta-r-list", sw.theta_r_list, "Explicit reflection angles (deflection)")->delimiter(',');
  w->add_option("--orders", sw.orders, "Analysis truncation half-width (deflection)")->capture_default_str();
  w->add_option("--out", sw.out, "Output prefix for <out>.csv")->capture_default_str();

  std::string ds_config, ds_out;
  auto* d = app.add_subcommand("dataset", "Generate a labeled (reactance, response) dataset");
  d->add_option("--config", ds_config, "Sweep configuration JSON")->required();
  d->add_option("--out-dir", ds_out, "Output directory (overrides config out_dir)")->required();

  ServiceConfig svc;
  std::string store;
  auto* v = app.add_subcommand("serve", "Run the EM API HTTP service");
  v->add_option("--port", svc.port, "TCP port")->required()->check(CLI::Range(0, 65535));
  v->add_option("--host", svc.host, "Bind address")->capture_default_str();
  v->add_option("--store", store, "Directory for persistent profile records");
  v->add_option("--max-body", svc.max_body, "Maximum request body in bytes")->capture_default_str();

  std::vector<std::string> storage{"metarefl"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& x : storage) argv.push_back(x.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return code(CliExit::Usage);
  }

  try {
    if (s->parsed()) return cmd_synthesize(syn, out);
    if (a->parsed()) return cmd_analyze(ana, out);
    if (w->parsed()) return cmd_sweep(sw, out);
    if (d->parsed()) return cmd_dataset(ds_config, ds_out, out, err);
    if (v->parsed()) {
      if (!store.empty()) svc.store_dir = store;
      return cmd_serve(svc, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return code(exit_for(e.code()));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return code(CliExit::Io);
  }
  return code(CliExit::Usage);
}

}  // namespace metarefl::cli

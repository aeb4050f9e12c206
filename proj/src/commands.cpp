#include "tdks/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "tdks/ksinit.hpp"
#include "tdks/trace_io.hpp"

namespace tdks {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".part";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os.flush()) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create run directory " + dir.string());
}

json grid_json(const Grid& g) {
  return {{"dims", g.dims}, {"points", g.points}, {"dx", g.dx}, {"offset", g.offset}, {"mass", g.mass},
          {"hbar", g.hbar}};
}

fs::path trace_path(const RunConfig& c) { return c.trace_file.empty() ? RunFiles{c.out_dir}.reference() : c.trace_file; }
fs::path rdm_path(const RunConfig& c) { return c.rdm_file.empty() ? RunFiles{c.out_dir}.rdm() : c.rdm_file; }

void require_same_grid(const Grid& a, const Grid& b, const std::string& what) {
  if (!a.same_geometry(b)) throw IoError("grid mismatch: " + what + " (" + a.describe() + " vs " + b.describe() + ")");
}

/// Static potential folded into H0 for the inversion; empty for custom systems.
RealVector static_potential(const RunConfig& c) {
  if (c.system == SystemKind::custom) return {};
  return make_system(c).inversion_static_potential();
}

std::size_t checkpoint_index(const RdmSeries& rdm, double t, double dt) {
  const double slack = 1e-6 * std::max(dt, 1e-12);
  for (std::size_t k = 0; k < rdm.times.size(); ++k)
    if (rdm.times[k] >= t - slack) return k;
  throw ConfigError("no 1RDM checkpoint at or after t = " + std::to_string(t));
}

std::string time_tag(double t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << t;
  return os.str();
}

}  // namespace

ModelSystem make_system(const RunConfig& config) {
  ModelSystem s;
  switch (config.system) {
    case SystemKind::harmonic: s = harmonic_test(); break;
    case SystemKind::two_electron: s = two_electron_system(config.full_scale); break;
    default: throw ConfigError("custom systems have no built-in definition; supply trace_file");
  }
  if (config.dt) s.dt = *config.dt;
  if (config.steps) s.steps = *config.steps;
  return s;
}

void cmd_generate_reference(const RunConfig& config, std::ostream& log) {
  const ModelSystem sys = make_system(config);
  const RunFiles files{config.out_dir};
  prepare_dir(files.dir);
  const auto start = Clock::now();

  ReferenceOptions opt;
  opt.krylov_dim = config.reference_krylov_dim;
  opt.triplet.tol = config.triplet_tol;
  opt.triplet.seed = config.seed;
  opt.rdm_every = config.checkpoint_every;
  opt.progress = [&](std::size_t frame) {
    if (frame % 200 == 0) log << "reference frame " << frame << " / " << sys.steps << '\n';
  };
  const ReferenceRun run = generate_reference(sys, opt);

  write_density_trace(files.reference(), run.trace);
  RdmSeries rdm{sys.grid, sys.particles, {}, run.rdms};
  for (std::size_t f : run.rdm_frames) rdm.times.push_back(run.trace.times[f]);
  write_rdm_series(files.rdm(), rdm);

  const NaturalOrbitalSet nos = natural_orbitals(run.rho0, std::min<Eigen::Index>(run.rho0.rows(), 4));
  json meta = {{"command", "generate-reference"},
               {"system", sys.name},
               {"grid", grid_json(sys.grid)},
               {"particles", sys.particles},
               {"dt", sys.dt},
               {"steps", run.trace.frames() - 1},
               {"energy0", run.energy0},
               {"occupations", std::vector<double>(nos.occupations.begin(), nos.occupations.end())},
               {"checkpoint_every", config.checkpoint_every},
               {"seed", config.seed},
               {"seconds", seconds_since(start)}};
  write_text(files.metadata("reference"), meta.dump(2) + "\n");
  write_text(files.config(), dump_config(config));
  log << "wrote " << run.trace.frames() << " frames to " << files.reference().string() << '\n';
}

void cmd_init_ks(const RunConfig& config, std::ostream& log) {
  const RunFiles files{config.out_dir};
  prepare_dir(files.dir);
  const TraceHeader th = read_header(trace_path(config));
  const TraceHeader rh = read_header(rdm_path(config));
  require_same_grid(th.grid, rh.grid, "trace and 1RDM files");
  if (config.system != SystemKind::custom) require_same_grid(th.grid, make_system(config).grid, "trace and system");
  const DensityTrace trace = read_density_trace(trace_path(config));
  const RdmSeries rdm = read_rdm_series(rdm_path(config));
  if (trace.frames() == 0 || rdm.times.empty()) throw IoError("empty trace or 1RDM file");
  if (std::abs(rdm.times[0] - trace.times[0]) > 1e-12) throw IoError("first 1RDM checkpoint is not at the trace start");

  KSInitReport rep;
  KSState s;
  try {
    s = prepare_ks_state(trace.grid, trace.particles, rdm.rho[0], trace.n[0], trace.n_dot[0], config.ks_tol,
                         config.ks_max_iter, config.propagator.phase, &rep);
  } catch (const PhaseAssignmentError& e) {
    throw NumericalFailure(std::string("phase assignment: ") + e.what(), trace.times[0]);
  }
  write_ks_state(files.ks_state(), s, trace.particles, trace.times[0]);
  json meta = {{"command", "init-ks"},
               {"time", trace.times[0]},
               {"occupations", std::vector<double>(rep.occupations.begin(), rep.occupations.end())},
               {"sweeps", rep.sweeps},
               {"phase_iterations", rep.phases.iterations},
               {"n_dot_error", rep.phases.residual()},
               {"density_error", rep.density_error},
               {"overlap", rep.overlap}};
  write_text(files.metadata("init-ks"), meta.dump(2) + "\n");
  log << "KS state written; |n_dot - n_dot_aim|_inf = " << rep.phases.residual()
      << ", density error = " << rep.density_error << '\n';
}

void cmd_invert(const RunConfig& config, std::ostream& log) {
  const RunFiles files{config.out_dir};
  prepare_dir(files.dir);
  const bool restart = config.restart_time.has_value();

  // Header checks first, so mismatched inputs fail before any computation.
  const TraceHeader th = read_header(trace_path(config));
  if (restart) require_same_grid(th.grid, read_header(rdm_path(config)).grid, "trace and 1RDM files");
  else require_same_grid(th.grid, read_header(files.ks_state()).grid, "trace and KS state");
  if (config.system != SystemKind::custom) require_same_grid(th.grid, make_system(config).grid, "trace and system");

  const DensityTrace target = read_density_trace(trace_path(config));
  if (target.frames() == 0) throw IoError("empty target trace");
  PropagatorConfig cfg = config.propagator;
  if (target.frames() > 1) cfg.dt = target.dt();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  KSState initial;
  std::size_t start_frame = 0;
  if (restart) {
    const RdmSeries rdm = read_rdm_series(rdm_path(config));
    const std::size_t c = checkpoint_index(rdm, *config.restart_time, cfg.dt);
    start_frame = target.frame_at(rdm.times[c]);
    try {
      initial = prepare_ks_state(target.grid, target.particles, rdm.rho[c], target.n[start_frame],
                                 target.n_dot[start_frame], config.ks_tol, config.ks_max_iter, cfg.phase);
    } catch (const PhaseAssignmentError& e) {
      throw NumericalFailure(std::string("phase assignment at restart: ") + e.what(), target.times[start_frame]);
    }
    log << "restarting at t = " << target.times[start_frame] << '\n';
  } else {
    double t0 = 0.0;
    initial = read_ks_state(files.ks_state(), &t0);
    start_frame = target.frame_at(t0);
  }

  const Hamiltonian h0(target.grid, static_potential(config));
  DensitySeries ks{target.grid, target.particles, {}, {}};
  const auto start = Clock::now();
  const InversionResult res =
      invert_trajectory(target, initial, h0, cfg, start_frame, 0, [&](std::size_t k, const StepResult& step) {
        ks.times.push_back(target.times[k]);
        ks.n.push_back(density(step.state));
        if (k % 100 == 0)
          log << "t = " << target.times[k] << "  outer " << step.diagnostics.outer_iterations << "  sc "
              << step.diagnostics.sc_change << '\n';
      });
  // The first callback carries the initial potential solve; its state is the initial state.
  if (!ks.n.empty()) ks.n[0] = density(initial);

  write_potential_trace(files.potential(restart), res.potentials, target.grid, target.particles);
  write_density_series(files.ks_density(restart), ks);
  json steps = json::array();
  for (std::size_t i = 0; i < res.steps.size(); ++i) {
    const StepDiagnostics& d = res.steps[i];
    steps.push_back({{"t", res.potentials.times[i]},
                     {"density_error", res.density_error[i]},
                     {"outer", d.outer_iterations},
                     {"inner", d.inner_iterations},
                     {"solver_iterations", d.solver_iterations},
                     {"clamp_events", d.clamp_events},
                     {"pruned", d.pruned_points},
                     {"sc_change", d.sc_change},
                     {"energy_shift", d.energy_shift}});
  }
  json meta = {{"command", "invert"},
               {"start_time", target.times[start_frame]},
               {"frames", res.potentials.frames()},
               {"failed", res.failed()},
               {"failure_time", res.failure_time ? json(*res.failure_time) : json(nullptr)},
               {"failure_reason", res.failure_reason},
               {"seconds", seconds_since(start)},
               {"steps", steps}};
  write_text(files.invert_metadata(restart), meta.dump(1) + "\n");
  write_text(files.config(), dump_config(config));
  if (res.failed())
    throw NumericalFailure("inversion failed: " + res.failure_reason, *res.failure_time);
  log << "inverted " << res.potentials.frames() << " frames\n";
}

void cmd_report(const RunConfig& config, std::ostream& log) {
  const RunFiles files{config.out_dir};
  if (!fs::is_directory(files.dir)) throw IoError("no run directory " + files.dir.string());
  RunConfig run = config;
  if (fs::exists(files.config())) {
    run = load_config(files.config());
    run.out_dir = config.out_dir;
    if (!config.snapshot_times.empty()) run.snapshot_times = config.snapshot_times;
  }
  if (!fs::exists(trace_path(run))) throw IoError("run directory has no reference trace");
  if (!fs::exists(files.potential()) && !fs::exists(files.potential(true)))
    throw IoError("run directory has no potential trace");
  const DensityTrace target = read_density_trace(trace_path(run));

  struct Part {
    PotentialTrace v;
    DensitySeries n;
  };
  std::vector<Part> parts;
  for (bool restart : {false, true}) {
    if (!fs::exists(files.potential(restart))) continue;
    Part p{read_potential_trace(files.potential(restart)), read_density_series(files.ks_density(restart))};
    require_same_grid(p.n.grid, target.grid, "report inputs");
    parts.push_back(std::move(p));
  }

  std::optional<ModelSystem> sys;
  if (run.system != SystemKind::custom) sys = make_system(run);
  const RealVector v_static = sys ? sys->inversion_static_potential() : RealVector();
  std::vector<double> times = run.snapshot_times;
  if (times.empty() && sys) times = sys->snapshot_times;
  if (times.empty()) times = {target.times.front()};
  const RealVector x = target.grid.axis();
  const double half = 0.5 * (target.frames() > 1 ? target.dt() : 1.0);

  int written = 0;
  for (double t : times) {
    const Part* part = nullptr;
    std::size_t k = 0;
    for (const Part& p : parts) {
      for (std::size_t i = 0; i < p.v.frames(); ++i) {
        if (std::abs(p.v.times[i] - t) <= half) {
          part = &p;
          k = i;
          break;
        }
      }
      if (part) break;
    }
    if (!part) {
      log << "warning: no inverted frame at t = " << t << "; skipped\n";
      continue;
    }
    const double tk = part->v.times[k];
    const std::size_t f = target.frame_at(tk);
    const RealVector& n_exact = target.n[f];
    const RealVector& n_ks = part->n.n[k];
    RealVector v_rec = part->v.v[k];
    if (v_static.size() == v_rec.size()) v_rec += v_static;
    RealVector v_exact = RealVector::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
    if (sys) v_exact = sys->potential_at(tk);
    Eigen::Index jmax = 0;
    n_exact.maxCoeff(&jmax);
    if (std::isfinite(v_exact[jmax])) v_rec.array() += v_exact[jmax] - v_rec[jmax];
    const bool first = k == 0;

    const fs::path out = files.dir / ("report_t" + time_tag(tk) + ".dat");
    std::ostringstream os;
    os << "# t = " << std::setprecision(17) << tk << '\n';
    os << "# x n_exact n_ks v_exact v_recovered abs_dn abs_dv\n";
    os << std::setprecision(12);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double dn = first ? 0.0 : std::abs(n_ks[j] - n_exact[j]);
      os << x[j] << ' ' << n_exact[j] << ' ' << n_ks[j] << ' ' << v_exact[j] << ' ' << v_rec[j] << ' ' << dn << ' '
         << std::abs(v_rec[j] - v_exact[j]) << '\n';
    }
    write_text(out, os.str());
    log << "wrote " << out.string() << '\n';
    ++written;
  }
  if (written == 0) throw IoError("no requested snapshot is available in " + files.dir.string());
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (name == "generate-reference") cmd_generate_reference(config, out);
    else if (name == "init-ks") cmd_init_ks(config, out);
    else if (name == "invert") cmd_invert(config, out);
    else if (name == "report") cmd_report(config, out);
    else if (name == "print-config") out << dump_config(config);
    else throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalFailure& e) {
    err << "numerical failure at t = " << e.time() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace tdks

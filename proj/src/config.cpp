#include "tdks/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace tdks {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  try {
    std::size_t used = 0;
    out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
  if (!std::isfinite(out)) throw ConfigError(key + ": must be finite");
  return out;
}

double positive(const std::string& key, const std::string& v) {
  const double d = as_double(key, v);
  if (!(d > 0.0)) throw ConfigError(key + ": must be positive");
  return d;
}

long long as_int(const std::string& key, const std::string& v, long long lo) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  if (out < lo) throw ConfigError(key + ": must be at least " + std::to_string(lo));
  if (out > std::numeric_limits<int>::max()) throw ConfigError(key + ": too large");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false");
}

struct Entry {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string opt_str(const std::optional<double>& v) { return v ? fmt(*v) : "none"; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"system", "harmonic | two_electron | custom (custom reads trace_file and rdm_file)",
       [](RunConfig& c, const std::string& v) {
         if (v == "harmonic") c.system = SystemKind::harmonic;
         else if (v == "two_electron") c.system = SystemKind::two_electron;
         else if (v == "custom") c.system = SystemKind::custom;
         else throw ConfigError("system: unknown system '" + v + "'");
       },
       [](const RunConfig& c) { return to_string(c.system); }},
      {"full_scale", "two-electron 271 x 271 lattice (81 x 81 otherwise)",
       [](RunConfig& c, const std::string& v) { c.full_scale = as_bool("full_scale", v); },
       [](const RunConfig& c) { return std::string(c.full_scale ? "true" : "false"); }},
      {"steps", "number of time steps; none keeps the system default",
       [](RunConfig& c, const std::string& v) {
         c.steps = v == "none" ? std::nullopt : std::optional<int>(static_cast<int>(as_int("steps", v, 0)));
       },
       [](const RunConfig& c) { return c.steps ? std::to_string(*c.steps) : std::string("none"); }},
      {"dt", "time step; none keeps the system default",
       [](RunConfig& c, const std::string& v) {
         c.dt = v == "none" ? std::nullopt : std::optional<double>(positive("dt", v));
       },
       [](const RunConfig& c) { return opt_str(c.dt); }},
      {"reference_krylov_dim", "Arnoldi subspace size of the reference evolution",
       [](RunConfig& c, const std::string& v) {
         c.reference_krylov_dim = static_cast<int>(as_int("reference_krylov_dim", v, 2));
       },
       [](const RunConfig& c) { return std::to_string(c.reference_krylov_dim); }},
      {"checkpoint_every", "frames between stored 1RDM checkpoints used for restarts",
       [](RunConfig& c, const std::string& v) { c.checkpoint_every = static_cast<int>(as_int("checkpoint_every", v, 1)); },
       [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
      {"triplet_tol", "residual tolerance of the two-electron triplet eigensolve",
       [](RunConfig& c, const std::string& v) { c.triplet_tol = positive("triplet_tol", v); },
       [](const RunConfig& c) { return fmt(c.triplet_tol); }},
      {"ks_tol", "phase-assignment tolerance on |n_dot - n_dot_aim| at initialization",
       [](RunConfig& c, const std::string& v) { c.ks_tol = positive("ks_tol", v); },
       [](const RunConfig& c) { return fmt(c.ks_tol); }},
      {"ks_max_iter", "Newton iterations of the initial phase assignment",
       [](RunConfig& c, const std::string& v) { c.ks_max_iter = static_cast<int>(as_int("ks_max_iter", v, 1)); },
       [](const RunConfig& c) { return std::to_string(c.ks_max_iter); }},
      {"krylov_dim", "Arnoldi subspace size of the inversion propagator",
       [](RunConfig& c, const std::string& v) { c.propagator.krylov_dim = static_cast<int>(as_int("krylov_dim", v, 2)); },
       [](const RunConfig& c) { return std::to_string(c.propagator.krylov_dim); }},
      {"sc_tol", "self-consistency tolerance on the orbital change per outer iteration",
       [](RunConfig& c, const std::string& v) { c.propagator.sc_tol = positive("sc_tol", v); },
       [](const RunConfig& c) { return fmt(c.propagator.sc_tol); }},
      {"inner_tol", "tolerance of the Euler-Maclaurin fixed point",
       [](RunConfig& c, const std::string& v) { c.propagator.inner_tol = positive("inner_tol", v); },
       [](const RunConfig& c) { return fmt(c.propagator.inner_tol); }},
      {"max_inner", "iteration cap of the Euler-Maclaurin fixed point",
       [](RunConfig& c, const std::string& v) { c.propagator.max_inner = static_cast<int>(as_int("max_inner", v, 1)); },
       [](const RunConfig& c) { return std::to_string(c.propagator.max_inner); }},
      {"max_outer", "iteration cap of the self-consistency loop",
       [](RunConfig& c, const std::string& v) { c.propagator.max_outer = static_cast<int>(as_int("max_outer", v, 1)); },
       [](const RunConfig& c) { return std::to_string(c.propagator.max_outer); }},
      {"anderson_depth", "Anderson mixing depth of the potential update (0: plain iteration)",
       [](RunConfig& c, const std::string& v) {
         c.propagator.anderson_depth = static_cast<int>(as_int("anderson_depth", v, 0));
       },
       [](const RunConfig& c) { return std::to_string(c.propagator.anderson_depth); }},
      {"max_dv", "per-point per-step limit on the potential change; none disables the clamp",
       [](RunConfig& c, const std::string& v) {
         c.propagator.max_dv = v == "none" ? std::nullopt : std::optional<double>(positive("max_dv", v));
       },
       [](const RunConfig& c) { return opt_str(c.propagator.max_dv); }},
      {"e0", "energy the initial potential is shifted to",
       [](RunConfig& c, const std::string& v) { c.propagator.e0 = as_double("e0", v); },
       [](const RunConfig& c) { return fmt(c.propagator.e0); }},
      {"reassign_phases", "phase assignment against the target n_dot after every step",
       [](RunConfig& c, const std::string& v) {
         c.propagator.reassign_phases_every_step = as_bool("reassign_phases", v);
       },
       [](const RunConfig& c) { return std::string(c.propagator.reassign_phases_every_step ? "true" : "false"); }},
      {"blowup_threshold", "density error that declares a step failed",
       [](RunConfig& c, const std::string& v) { c.propagator.blowup_threshold = positive("blowup_threshold", v); },
       [](const RunConfig& c) { return fmt(c.propagator.blowup_threshold); }},
      {"solver", "force-balance solver: pinv | minres_qlp | lsqr",
       [](RunConfig& c, const std::string& v) {
         if (v == "pinv") c.propagator.solver = PotentialSolver::pinv;
         else if (v == "minres_qlp") c.propagator.solver = PotentialSolver::minres_qlp;
         else if (v == "lsqr") c.propagator.solver = PotentialSolver::lsqr;
         else throw ConfigError("solver: unknown solver '" + v + "'");
       },
       [](const RunConfig& c) {
         switch (c.propagator.solver) {
           case PotentialSolver::minres_qlp: return std::string("minres_qlp");
           case PotentialSolver::lsqr: return std::string("lsqr");
           default: return std::string("pinv");
         }
       }},
      {"solver_tol", "relative tolerance of the iterative force-balance solvers",
       [](RunConfig& c, const std::string& v) { c.propagator.solver_tol = positive("solver_tol", v); },
       [](const RunConfig& c) { return fmt(c.propagator.solver_tol); }},
      {"solver_max_iter", "iteration cap of the iterative solvers (0: automatic)",
       [](RunConfig& c, const std::string& v) {
         c.propagator.solver_max_iter = static_cast<int>(as_int("solver_max_iter", v, 0));
       },
       [](const RunConfig& c) { return std::to_string(c.propagator.solver_max_iter); }},
      {"prune_threshold", "K diagonal magnitude below which lattice points are pruned",
       [](RunConfig& c, const std::string& v) {
         c.propagator.prune_threshold = positive("prune_threshold", v);
         c.propagator.phase.prune_threshold = c.propagator.prune_threshold;
       },
       [](const RunConfig& c) { return fmt(c.propagator.prune_threshold); }},
      {"pinv_rcond", "relative singular-value cutoff of the dense pseudoinverse",
       [](RunConfig& c, const std::string& v) { c.propagator.pinv_rcond = positive("pinv_rcond", v); },
       [](const RunConfig& c) { return fmt(c.propagator.pinv_rcond); }},
      {"phase_tol", "per-step phase-assignment tolerance",
       [](RunConfig& c, const std::string& v) { c.propagator.phase_tol = positive("phase_tol", v); },
       [](const RunConfig& c) { return fmt(c.propagator.phase_tol); }},
      {"phase_max_iter", "per-step phase-assignment Newton iterations",
       [](RunConfig& c, const std::string& v) {
         c.propagator.phase_max_iter = static_cast<int>(as_int("phase_max_iter", v, 1));
       },
       [](const RunConfig& c) { return std::to_string(c.propagator.phase_max_iter); }},
      {"out_dir", "run directory",
       [](RunConfig& c, const std::string& v) {
         if (v.empty()) throw ConfigError("out_dir: empty path");
         c.out_dir = v;
       },
       [](const RunConfig& c) { return c.out_dir.string(); }},
      {"trace_file", "target density trace (default: <out_dir>/reference.trace)",
       [](RunConfig& c, const std::string& v) { c.trace_file = v == "none" ? std::filesystem::path() : std::filesystem::path(v); },
       [](const RunConfig& c) { return c.trace_file.empty() ? std::string("none") : c.trace_file.string(); }},
      {"rdm_file", "1RDM checkpoints (default: <out_dir>/rdm.trace)",
       [](RunConfig& c, const std::string& v) { c.rdm_file = v == "none" ? std::filesystem::path() : std::filesystem::path(v); },
       [](const RunConfig& c) { return c.rdm_file.empty() ? std::string("none") : c.rdm_file.string(); }},
      {"restart_time", "start the inversion from the first checkpoint at or after this time",
       [](RunConfig& c, const std::string& v) {
         c.restart_time = v == "none" ? std::nullopt : std::optional<double>(as_double("restart_time", v));
         if (c.restart_time && *c.restart_time < 0.0) throw ConfigError("restart_time: must be non-negative");
       },
       [](const RunConfig& c) { return opt_str(c.restart_time); }},
      {"seed", "seed of the triplet eigensolver start vector",
       [](RunConfig& c, const std::string& v) {
         std::uint64_t s = 0;
         const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
         if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("seed: not an unsigned integer");
         c.seed = s;
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"snapshot_times", "comma-separated report times; none selects the system defaults",
       [](RunConfig& c, const std::string& v) {
         c.snapshot_times.clear();
         if (v == "none") return;
         std::istringstream is(v);
         for (std::string item; std::getline(is, item, ',');)
           c.snapshot_times.push_back(as_double("snapshot_times", trim(item)));
       },
       [](const RunConfig& c) {
         if (c.snapshot_times.empty()) return std::string("none");
         std::string s;
         for (std::size_t i = 0; i < c.snapshot_times.size(); ++i) s += (i ? "," : "") + fmt(c.snapshot_times[i]);
         return s;
       }},
  };
  return table;
}

}  // namespace

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::two_electron: return "two_electron";
    case SystemKind::custom: return "custom";
    default: return "harmonic";
  }
}

void RunConfig::validate() const {
  if (system == SystemKind::custom && trace_file.empty())
    throw ConfigError("system = custom needs trace_file");
  try {
    PropagatorConfig p = propagator;
    if (dt) p.dt = *dt;
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (key == e.key) {
      e.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    apply_setting(c, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in);
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream os;
  for (const Entry& e : entries()) os << "# " << e.help << '\n' << e.key << " = " << e.get(config) << '\n';
  return os.str();
}

}  // namespace tdks

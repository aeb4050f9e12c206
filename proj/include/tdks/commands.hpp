#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "tdks/config.hpp"
#include "tdks/systems.hpp"

namespace tdks {

/// Step or initialization failure; `time` is the failing time when known.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitIo = 4 };

/// Files of a run directory.
struct RunFiles {
  std::filesystem::path dir;

  std::filesystem::path reference() const { return dir / "reference.trace"; }
  std::filesystem::path rdm() const { return dir / "rdm.trace"; }
  std::filesystem::path ks_state() const { return dir / "ks_state.bin"; }
  std::filesystem::path config() const { return dir / "config.txt"; }
  std::filesystem::path metadata(const std::string& command) const { return dir / (command + ".json"); }
  /// `restart` selects the files written by a restarted inversion.
  std::filesystem::path potential(bool restart = false) const {
    return dir / (restart ? "potential.restart.trace" : "potential.trace");
  }
  std::filesystem::path ks_density(bool restart = false) const {
    return dir / (restart ? "ks_density.restart.trace" : "ks_density.trace");
  }
  std::filesystem::path invert_metadata(bool restart = false) const {
    return dir / (restart ? "invert.restart.json" : "invert.json");
  }
};

/// The model system selected by the config with its step overrides applied.
/// Throws ConfigError for `system = custom`.
ModelSystem make_system(const RunConfig& config);

/// Exact evolution: writes reference.trace, rdm.trace (1RDM checkpoints) and reference.json.
void cmd_generate_reference(const RunConfig& config, std::ostream& log);
/// Initial KS orbitals at t = 0: writes ks_state.bin and init-ks.json.
void cmd_init_ks(const RunConfig& config, std::ostream& log);
/// Inversion over the target trace: writes potential.trace, ks_density.trace and invert.json
/// (the .restart variants when restart_time is set). Partial output is written before a
/// NumericalFailure is thrown.
void cmd_invert(const RunConfig& config, std::ostream& log);
/// Columnar snapshot files report_t<time>.dat in the run directory.
void cmd_report(const RunConfig& config, std::ostream& log);

/// Dispatches a command name and maps exceptions to exit codes, with messages on `err`.
int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace tdks

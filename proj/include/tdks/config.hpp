#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdks/propagation.hpp"

namespace tdks {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SystemKind { harmonic, two_electron, custom };

/// Flat key = value run configuration. Lines starting with '#' are comments.
struct RunConfig {
  SystemKind system = SystemKind::harmonic;
  /// Two-electron 271 x 271 lattice instead of the 81 x 81 desk lattice.
  bool full_scale = false;
  /// Overrides of the system's step count and time step.
  std::optional<int> steps;
  std::optional<double> dt;

  int reference_krylov_dim = 50;
  /// Frames between stored 1RDM checkpoints (restart points).
  int checkpoint_every = 10;
  double triplet_tol = 1e-9;

  double ks_tol = 1e-10;
  int ks_max_iter = 50;

  PropagatorConfig propagator;

  std::filesystem::path out_dir = "run";
  /// Target trace and 1RDM checkpoints; default to the files in out_dir.
  std::filesystem::path trace_file;
  std::filesystem::path rdm_file;
  std::optional<double> restart_time;
  std::uint64_t seed = 1;
  /// Report snapshot times; empty selects the system defaults.
  std::vector<double> snapshot_times;

  /// Throws ConfigError.
  void validate() const;
};

std::string to_string(SystemKind kind);

/// Sets one key. Throws ConfigError for unknown keys and malformed or out-of-range values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

RunConfig parse_config(std::istream& in);
/// Throws ConfigError when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value and a one-line description, in a form parse_config accepts.
std::string dump_config(const RunConfig& config);

}  // namespace tdks

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tdks/commands.hpp"

int main(int argc, char** argv) {
  using namespace tdks;

  CLI::App app{"Time-dependent Kohn-Sham potential inversion on a sinc-DVR lattice"};
  app.fallthrough();
  app.require_subcommand(1);
  app.footer("Config keys and defaults (key = value lines, '#' comments):\n\n" + dump_config(RunConfig{}));

  std::string config_path;
  std::string out_dir;
  std::optional<double> restart_time;
  bool full_scale = false;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--out", out_dir, "run directory (overrides out_dir)");
  app.add_option("--restart-time", restart_time, "invert from the first 1RDM checkpoint at or after this time");
  app.add_flag("--full-scale", full_scale, "two-electron 271 x 271 lattice");
  app.add_option("--seed", seed, "seed of the triplet eigensolver start vector");

  const char* names[][2] = {
      {"generate-reference", "exact evolution of the selected system; writes the target trace"},
      {"init-ks", "initial Kohn-Sham orbitals from the t = 0 1RDM and density"},
      {"invert", "recover the Kohn-Sham potential over the target trace"},
      {"report", "columnar snapshot files of densities and potentials"},
      {"print-config", "print the effective configuration"},
  };
  for (const auto& n : names) app.add_subcommand(n[0], n[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  RunConfig config;
  try {
    if (!config_path.empty()) config = load_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (restart_time) {
      if (!(*restart_time >= 0.0)) throw ConfigError("--restart-time must be non-negative");
      config.restart_time = *restart_time;
    }
    if (full_scale) config.full_scale = true;
    if (seed) config.seed = *seed;
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  return run_command(command, config, std::cout, std::cerr);
}

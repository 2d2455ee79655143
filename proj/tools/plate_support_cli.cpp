#include <iostream>

#include "CLI11.hpp"
#include "runner.hpp"

namespace cli = plate_support::cli;

int main(int argc, char** argv) {
  CLI::App app{"Plate support experiments: solve, dual, optimize, sweep, audit, gamma, probe"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  cli::Options opt;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--threads", opt.threads, "worker threads for 3D energy sums")->capture_default_str();
  app.add_flag("--oracle", opt.oracle, "dense direct-solve cross-check on small grids");

  const char* help[] = {"clamped plate solve", "crack dual and duality gap", "simulated annealing on the support",
                        "Pareto sweep over lambda", "Ahlfors, Griffith and continuity audits",
                        "3D recovery ladder against the limit energy", "rigidity and Poincare probes"};
  for (std::size_t k = 0; k < cli::subcommands().size(); ++k) app.add_subcommand(cli::subcommands()[k], help[k]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kConfigError;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();
  if (seed_opt->count() > 0) opt.seed = seed;

  std::string bad;
  cli::Log log;
  log.level = cli::log_level_from_env(&bad);
  if (!bad.empty()) log.warn("PLATE_SUPPORT_LOG='" + bad + "' is not quiet, info or debug; using info");
  return cli::run(opt, log);
}

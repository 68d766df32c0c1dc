#include <iostream>

#include <CLI11.hpp>

#include "emid/pipeline/commands.hpp"

int main(int argc, char** argv) {
  using namespace emid::pipeline;
  CLI::App app{"emid: exact EMI/EMID bounds, estimator calibration and shift sweeps"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string config, out, replay;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {{"verify-bounds", "check every inequality on seeded random instances"},
                      {"calibrate-estimators", "score the estimators against analytic oracles"},
                      {"sweep-shifts", "evaluate all bounds over severity ladders"},
                      {"correlate", "correlation statistics over a finished sweep"}};
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "root seed (overrides the config)");
    cmd->add_option("--out", out, "output directory (overrides the config)");
    cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    if (std::string(s.name) == "verify-bounds")
      cmd->add_option("--replay", replay, "recompute one serialized instance")->check(CLI::ExistingFile);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto* cmd = app.get_subcommands().front();
  if (cmd->count("--config")) opts.config = config;
  if (cmd->count("--seed")) opts.seed = seed;
  if (cmd->count("--out")) opts.out = out;
  if (cmd->get_option_no_throw("--replay") && cmd->count("--replay")) opts.replay = replay;
  opts.jobs = jobs;
  return run_command(cmd->get_name(), opts);
}

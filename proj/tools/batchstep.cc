#include <cstdint>
#include <vector>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "batchstep/commands.hpp"
#include "batchstep/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Batch-size scaling laws for a unified deep-learning optimizer"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_options;
  std::size_t workers = 0;
  for (const char* name : {"predict", "run", "sweep", "validate", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key=value config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    seed_options.push_back(sub->add_option("--seed", seed, "overrides run.seed and sweep.seed"));
    sub->add_option("--workers", workers, "worker threads (0: config or hardware)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : batchstep::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    batchstep::Config cfg = batchstep::Config::load(config_path);
    for (const CLI::Option* opt : seed_options) {
      if (opt->count() == 0) continue;
      cfg.set("run.seed", std::to_string(seed));
      cfg.set("sweep.seed", std::to_string(seed));
    }
    batchstep::CommandOptions opts;
    opts.out_dir = out_dir;
    opts.workers = workers;
    const batchstep::CommandResult result = batchstep::run_command(command, cfg, opts);
    std::cout << result.report.text();
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "batchstep " << command << ": " << e.what() << '\n';
    return batchstep::exit_code_for(e);
  }
}

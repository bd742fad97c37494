// carleman-mhd <command> --config <path> [--out <dir>] [--threads k] [--seed n]
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmhd/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Carleman estimate verification and coefficient reconstruction for MHD"};
  cmhd::CommandOptions o;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string commands;
  for (const auto& c : cmhd::known_commands()) commands += (commands.empty() ? "" : ", ") + c;
  app.add_option("command", o.command, "one of: " + commands)->required();
  app.add_option("--config", o.config_path, "experiment config (INI); defaults when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("--out", o.out_dir,
                 std::string("output directory (default: config, then $") + cmhd::kOutDirEnv +
                     ", then ./out)");
  auto* t = app.add_option("--threads", threads, "worker threads for independent cells")
                ->check(CLI::PositiveNumber);
  auto* s = app.add_option("--seed", seed, "first noise seed; the list becomes seed, seed+1, ...");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cmhd::kExitConfig;
  }
  if (*t) o.threads = threads;
  if (*s) o.seed = seed;
  return cmhd::run(o, std::cout);
}

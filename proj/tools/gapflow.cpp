// gapflow: command-line driver for the thin-gap flow solvers.
#include "gapflow/errors.hpp"
#include "gapflow/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace gapflow;

namespace {

const char* kExitTable =
    "exit codes: 0 success, 1 solver failure, 2 usage or schema error, 3 I/O error,\n"
    "            4 a verification check failed\n"
    "threads: GAPFLOW_THREADS (default 1)";

struct Flags {
  std::string config;
  std::string out = ".";
  std::vector<double> eps;
  std::string grid;
  bool quiet = false;
  std::vector<std::string> families;
  int samples = 200;
};

void apply_overrides(ProblemConfig& cfg, const std::string& command, const Flags& f) {
  if (!f.grid.empty()) {
    int a = 0, b = 0;
    char tail = 0;
    if (std::sscanf(f.grid.c_str(), "%dx%d%c", &a, &b, &tail) != 2)
      throw SchemaError(0, "grid", "--grid expects N1xN2, got '" + f.grid + "'");
    cfg.n[0] = a;
    cfg.n[1] = b;
  }
  if (!f.eps.empty()) {
    if (command == "verify-asymptotics") {
      cfg.sweep_eps = f.eps;
    } else {
      if (f.eps.size() != 1) throw SchemaError(0, "eps", "--eps takes one value for " + command);
      cfg.eps = f.eps[0];
    }
  }
  validate_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thin-gap flow on curved moving surfaces", "gapflow"};
  app.footer(kExitTable);
  app.require_subcommand(1);
  Flags f;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"solve-newmodel", "solve the moment model and export the fields"},
      {"solve-reynolds", "solve the lubrication (Reynolds) limit"},
      {"solve-thinfilm", "integrate the thin-film limit"},
      {"verify-asymptotics", "run an eps sweep against a limit model"},
      {"coeffs-dump", "write geometry coefficient tables as CSV"},
      {"validate-chart", "check chart derivatives by finite differences"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", f.config, "key = value problem file")->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--eps", f.eps, "eps override; a comma list sets the sweep")->delimiter(',');
    sub->add_option("--grid", f.grid, "grid override, N1xN2");
    sub->add_flag("--quiet", f.quiet, "suppress the log");
    if (name == "coeffs-dump") sub->add_option("--family", f.families, "coefficient families (default all)");
    if (name == "validate-chart") sub->add_option("--samples", f.samples, "sample points")->check(CLI::PositiveNumber);
  }

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const auto& c : commands) known = known || c.first == argv[1];
    if (!known) {
      std::cerr << "gapflow: unknown command '" << argv[1] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "gapflow: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ProblemConfig cfg = f.config.empty() ? ProblemConfig{} : load_config(f.config);
    apply_overrides(cfg, command, f);
    RunOptions opt;
    opt.out_dir = f.out;
    opt.quiet = f.quiet;
    opt.families = f.families;
    opt.samples = f.samples;
    return run_command(command, cfg, opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "gapflow " << command << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
}

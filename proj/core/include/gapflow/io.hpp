#pragma once

#include "gapflow/limit.hpp"
#include "gapflow/model.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gapflow {

// Key-value problem description. One `key = value` per line, `#` starts a
// comment. Lists are whitespace separated. Keys:
//   chart, chart.<param>, spline_file, domain (lo1 hi1 lo2 hi2), grid (N1xN2),
//   periodic (two booleans), gap, h0, gap.<param>, gap_floor, eps, rho0, nu,
//   bc (slip | traction), V, W (two numbers each), pi0, pi1, CR1, s0,
//   forcing (none | uniform), force (two numbers), p_boundary,
//   t0, t_end, dt, dt_per_eps, tol, max_iters, stabilize, output (csv, vtk),
//   scenario, sweep_eps.
struct ProblemConfig {
  std::string chart = "plane";
  std::map<std::string, double> chart_params;
  std::string spline_file;
  Rect domain;
  int n[2] = {32, 32};
  bool periodic[2] = {true, true};
  std::string gap = "constant";
  double h0 = 1.0;  // base gap: "value" of the family, ha for the slider
  std::map<std::string, double> gap_params;
  double gap_floor = 0.1;
  double eps = 0.1;
  double rho0 = 1.0, nu = 1.0;
  std::string bc = "slip";
  double V[2] = {0.0, 0.0}, W[2] = {0.0, 0.0};
  double pi0 = 0.0, pi1 = 0.0, CR1 = 0.0, s0 = -1.0;
  std::string forcing = "none";
  double force[2] = {0.0, 0.0};  // constant fbar_i^{0,0} under `uniform`
  double p_boundary = 0.0;
  double t0 = 0.0, t_end = 0.0;
  double dt = 0.0;           // fixed step when positive
  double dt_per_eps = 0.25;  // otherwise dt = dt_per_eps * eps
  double tol = 1e-10;
  int max_iters = 200;
  bool stabilize = true;
  std::vector<std::string> output = {"csv"};
  std::string scenario = "slip-slider";
  std::vector<double> sweep_eps = {0.2, 0.1, 0.05, 0.025};

  std::map<std::string, int> lines;  // source line of each key read

  bool transient() const { return t_end > t0; }
  double step() const { return dt > 0.0 ? dt : dt_per_eps * eps; }
};

// SchemaError with line and key; UnknownRegistryName for unregistered names.
ProblemConfig parse_config(const std::string& text);
ProblemConfig load_config(const std::string& path);  // IoError when unreadable
// Every key with its effective value; parse_config(echo_config(c)) reproduces c.
std::string echo_config(const ProblemConfig& c);
// Re-checks the invariants after overrides.
void validate_config(const ProblemConfig& c);

Problem build_problem(const ProblemConfig& c);
LimitProblem build_limit_problem(const ProblemConfig& c);

// Named nodal fields with coordinates and run metadata.
struct FieldSnapshot {
  Grid grid;
  double t = 0.0;
  std::map<std::string, std::string> meta;  // model, eps; the CSV writer adds t and the grid
  std::vector<std::string> names;
  std::vector<std::vector<double>> fields;

  void add(const std::string& name, std::vector<double> values);
  const std::vector<double>& field(const std::string& name) const;
};

FieldSnapshot snapshot_of(const ModelState& s, double eps);
FieldSnapshot snapshot_of(const Lubrication& s, double eps);
FieldSnapshot snapshot_of(const ThinFilm& s, double eps);

// `# key=value` metadata lines, header xi1,xi2,<names>, one row per node in index
// order, 17 significant digits. IoError naming the field if a value is not finite.
void write_snapshot_csv(const FieldSnapshot& s, std::ostream& os);
FieldSnapshot read_snapshot_csv(std::istream& is);
// Legacy VTK structured grid; points are X(xi1, xi2, t) when a chart is given.
void write_snapshot_vtk(const FieldSnapshot& s, std::ostream& os, const SurfaceChart* chart = nullptr);
// format: csv or vtk. IoError on failure.
void export_snapshot(const FieldSnapshot& s, const std::string& format, const std::string& path,
                     const SurfaceChart* chart = nullptr);

// Process exit codes of the command-line tool.
enum ExitCode { kExitOk = 0, kExitSolver = 1, kExitUsage = 2, kExitIo = 3, kExitCheckFailed = 4 };
int exit_code_for(const std::exception& e);

std::vector<std::string> command_names();

struct RunOptions {
  std::string out_dir = ".";
  bool quiet = false;
  std::vector<std::string> families;  // coeffs-dump; empty means all
  int samples = 200;                  // validate-chart
};

// Runs one pipeline and writes its artifacts into out_dir. Returns an ExitCode;
// module errors propagate to the caller.
int run_command(const std::string& command, const ProblemConfig& cfg, const RunOptions& opt, std::ostream& log);

}  // namespace gapflow

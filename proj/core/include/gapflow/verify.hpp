#pragma once

#include "gapflow/limit.hpp"
#include "gapflow/model.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gapflow {

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms of the log-log fit residuals
  int points = 0;
};

// Least-squares slope of log(error) against log(param). InsufficientPoints for
// fewer than two pairs, unequal lengths or non-positive entries.
OrderFit estimate_order(const std::vector<double>& errors, const std::vector<double>& params);

enum class ScenarioKind { slip_slider, traction_wave };

// Flat-plane scenarios comparing the new model with a limit model.
//   slip_slider:   linear slider gap ha -> hb, lower surface moving at (U, 0),
//                  upper at rest; Dirichlet xi1 ends, periodic xi2. Steady.
//   traction_wave: gap h0 exp(-amp k cos(k xi1) t) carried by V = (amp sin(k xi1), 0),
//                  held by the matching body force; friction CR1; periodic.
struct Scenario {
  std::string name;
  ScenarioKind kind = ScenarioKind::slip_slider;
  int n[2] = {64, 64};
  FluidProperties fluid;
  double ha = 1.0, hb = 0.5, U = 1.0;
  double h0 = 1.0, amp = 0.1, wavelength = 1.0, CR1 = 0.5;
  double t_end = 0.1;
  double dt_per_eps = 0.25;  // dt = dt_per_eps * eps, rounded to hit t_end
  double gap_floor = 0.1;
  SolverOptions opts;
};

Scenario slip_slider_scenario();
Scenario traction_wave_scenario();
std::vector<std::string> scenario_names();
Scenario scenario_by_name(const std::string& name);  // UnknownRegistryName

// Named scalars measured at one eps.
using Metrics = std::map<std::string, double>;

struct ScenarioRun {
  double eps = 0.0;
  Problem problem;
  ModelState state;
  LimitProblem limit;
  LimitSolution reference;
  Metrics errors;      // new model against the limit model
  Metrics structural;  // decay diagnostics
  Metrics residuals;   // equation residuals of the converged state
  SolveStats stats;    // accumulated over steps
  int steps = 0;
};

// Solves the new model and the limit model at one eps. Propagates NonConvergence.
ScenarioRun run_scenario(const Scenario& sc, double eps);

// Max |momentum residual| (n = 0, 1) and max |divergence residual| over interior
// nodes; prev and dt select the transient operator.
Metrics residual_metrics(const NewModel& m, const ModelState& s, const ModelState* prev = nullptr, double dt = 0.0);

// Cascade diagnostics of a converged state: rms of eps^2 pbar^n (n = 1..3),
// ubar^3 and ubar_3^n under slip; ubar^1, ubar^2 and the p^0 law under traction.
Metrics structural_limit_checks(const NewModel& model, const ModelState& s, const Scenario& sc);

struct SweepPoint {
  double eps = 0.0;
  bool converged = false;
  std::string failure;
  Metrics values;  // errors, structural facts and residuals together
  double seconds = 0.0;
  int iterations = 0;
  int factorizations = 0;
};

struct SweepReport {
  std::string scenario;
  std::vector<SweepPoint> points;
  std::map<std::string, OrderFit> slopes;  // over converged points, when >= 2

  // True when the metric decreases strictly along the converged points.
  bool monotone(const std::string& name) const;
  std::vector<double> series(const std::string& name) const;
};

// eps strictly decreasing, each in (0, 0.2]. A failed point is kept with
// converged = false and excluded from the fits. Points run concurrently when
// threads > 1; the report does not depend on completion order.
SweepReport run_epsilon_sweep(const Scenario& sc, const std::vector<double>& eps, int threads = 1);

struct InvariantCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Convergence claims of a sweep: limit errors decrease monotonically with slope
// >= min_slope, and the cascade diagnostics decay with slope >= min_slope.
std::vector<InvariantCheck> sweep_invariants(const SweepReport& r, ScenarioKind kind, double min_slope = 0.8);

// eps,error_name,value,slope,fit_residual with 17 significant digits; no timings.
void write_sweep_csv(const SweepReport& r, std::ostream& os);
// eps,seconds,iterations,factorizations
void write_timing_csv(const SweepReport& r, std::ostream& os);
void write_sweep_summary(const SweepReport& r, std::ostream& os);

// Manufactured solutions for the slip closure.
struct ManufacturedTargets {
  std::function<double(int n, int i, double xi1, double xi2)> u;  // ubar_i^n
  std::function<double(double xi1, double xi2)> p0;               // pbar^0
};

// Stream-function targets (discretely divergence free on square cells) with
// pbar^0 of size 1 / eps^2.
ManufacturedTargets trigonometric_targets(double eps);
ManufacturedTargets zero_targets();

struct ManufacturedSolution {
  Problem problem;  // base problem with slip data, traces and nodal forcing
  ModelState exact;
  double kinematic_defect = 0.0;
};

// Forcing from a fourth-order evaluation of the momentum operator at the targets.
// IncompatibleTargets when the kinematic defect exceeds tol * max(1, max |u|).
ManufacturedSolution manufactured_solution(const Problem& base, const ManufacturedTargets& tg, double tol = 1e-8);

struct ManufacturedError {
  double u = 0.0;  // relative L2 over all tangential moments
  double p = 0.0;  // relative L2 of pbar^0
};
ManufacturedError manufactured_error(const ModelState& s, const ModelState& exact);

struct OrderStudy {
  std::vector<int> cells;
  std::vector<ManufacturedError> errors;
  std::vector<double> seconds;
  OrderFit u, p;
};

// Flat periodic unit square, constant gap, trigonometric targets.
OrderStudy manufactured_order_study(const std::vector<int>& cells, double eps);

}  // namespace gapflow

#pragma once

#include "gapflow/coefficients.hpp"
#include "gapflow/gap.hpp"
#include "gapflow/geometry.hpp"
#include "gapflow/grid.hpp"

#include <functional>
#include <memory>
#include <variant>
#include <vector>

namespace gapflow {

struct FluidProperties {
  double rho0 = 1.0;
  double nu = 1.0;
  double mu() const { return rho0 * nu; }
};

// Covariant tangential velocities of the lower (V) and upper (W) surface.
struct SlipData {
  std::function<void(double xi1, double xi2, double t, double V[2], double W[2])> velocity;
};

struct TractionData {
  std::function<double(double xi1, double xi2, double t)> pi0;
  std::function<double(double xi1, double xi2, double t)> pi1;
  double CR1 = 0.0;  // friction constant, C_R = eps CR1
  double s0 = -1.0;  // n0 = s0 a3
};

// Traces of the nine primary unknowns on Dirichlet lateral sides, ordered
// u^0_1, u^0_2, u^1_1, u^1_2, u^2_1, u^2_2, u^3_1, u^3_2, p^0.
using TraceFn = std::function<void(double xi1, double xi2, double t, double out[9])>;

struct BoundaryData {
  std::variant<SlipData, TractionData> surface;
  TraceFn trace;

  bool is_slip() const { return std::holds_alternative<SlipData>(surface); }
  const SlipData& slip() const;          // VariantMismatch for traction data
  const TractionData& traction() const;  // VariantMismatch for slip data
};

// xi3-moments of the body force. i = 0, 1 tangential, 2 normal; n = 0..3.
// Node-wise values take precedence over the function when filled.
struct ForcingField {
  std::function<double(int i, int n, double xi1, double xi2, double t)> moment;
  std::vector<double> nodal[3][kMom];

  double at(int i, int n, int node, double xi1, double xi2, double t) const;
};

struct ModelState {
  Grid grid;
  double t = 0.0;
  std::vector<double> u[kMom][2];  // tangential moments ubar_i^n
  std::vector<double> u3[kMom];    // normal moments, u3[0] = dX/dt . a3
  std::vector<double> p[kMom];     // pressure moments

  ModelState() = default;
  explicit ModelState(const Grid& g) { resize(g); }
  void resize(const Grid& g);
};

struct SolverOptions {
  int max_iters = 200;
  double tol = 1e-10;      // max scaled residual
  double rel_tol = 1e-10;  // update size relative to the state
  double abs_tol = 1e-12;
  double contraction = 0.25;  // refactor when the residual ratio is worse
  bool stabilize = true;
  bool condense = true;  // eliminate locally determined unknowns before factorising
  int threads = 0;
};

struct Problem {
  ChartPtr chart;
  GapField gap;
  FluidProperties fluid;
  BoundaryData bc;
  ForcingField forcing;
  Grid grid;
  int n_trunc = 3;
  SolverOptions opts;
};

struct SolveStats {
  int iterations = 0;
  int factorizations = 0;
  double residual = 0.0;
  std::vector<double> history;
};

struct PointValue {
  double u[3] = {0, 0, 0};  // components in the basis a_k
  Vec3 velocity = Vec3::Zero();
  double p = 0.0;
};

// Data frozen at one time level.
struct Level {
  double t = 0.0;
  std::vector<CoefficientTable> tab;
  std::vector<double> w;  // dX/dt . a3 at the nodes
  std::vector<double> f[3][kMom];
  std::vector<double> V[2], W[2], pi0, pi1;
};

class NewModel {
 public:
  explicit NewModel(Problem p);
  ~NewModel();
  NewModel(const NewModel&) = delete;
  NewModel& operator=(const NewModel&) = delete;

  const Problem& problem() const { return pb_; }
  const Grid& grid() const { return pb_.grid; }
  double eps() const { return pb_.gap.eps(); }

  std::shared_ptr<const Level> level(double t) const;

  // Slip: u^0 = V, u^1 = W - V; traction: u^0 = 0, p^0 = pi0. Reconstructed.
  ModelState initial_state(double t) const;

  SolveStats solve_steady(ModelState& s);
  SolveStats step(ModelState& s, double dt);

  // u3^0 from the frame, u3^1..3 from the tangential moments. Idempotent.
  void reconstruct_vertical(ModelState& s) const;
  // p^1..3; time derivatives use prev when given.
  void reconstruct_pressure(ModelState& s, const ModelState* prev = nullptr, double dt = 0.0) const;

  // Scaled by eps^2. Needs a reconstructed state.
  std::vector<double> momentum_residual(const ModelState& s, int n, int i, const ModelState* prev = nullptr,
                                        double dt = 0.0) const;
  std::vector<double> divergence_residual(const ModelState& s) const;
  // Max over components of the surface condition rows at every node.
  std::vector<double> slip_residual(const ModelState& s) const;
  std::vector<double> traction_residual(const ModelState& s) const;
  // (sigma n1) . n1 + pi1 on the upper surface; not part of the closure.
  std::vector<double> upper_normal_traction(const ModelState& s) const;
  // Projects u^0 and u^1 onto the slip constraints.
  void apply_slip_bc(ModelState& s) const;

  PointValue evaluate(const ModelState& s, int node, double xi3) const;

  // Unscaled momentum residuals (n = 0, 1) and the kinematic defect sum u3^k - eps dh/dt
  // of a given state, with u3 and p^1..3 rebuilt first; derivatives use central
  // stencils of the given order (2 or 4), independent of the solver's.
  struct OperatorSample {
    std::vector<double> momentum[2][2];  // [n][i]
    std::vector<double> kinematic;
  };
  OperatorSample operator_sample(const ModelState& s, int stencil_order) const;

  struct Impl;  // opaque; public so solver helpers can take it

 private:
  friend double jacobian_defect(const NewModel&, const ModelState&, int, unsigned);
  Problem pb_;
  std::unique_ptr<Impl> impl_;
};

// Largest relative difference between analytic Jacobian columns and forward
// differences of the residual, over randomly chosen columns.
double jacobian_defect(const NewModel& model, const ModelState& s, int columns, unsigned seed = 1);

// Time-independent helpers also used by the verification harness.
std::vector<double> field_norms(const std::vector<double>& f);  // {max, rms}

}  // namespace gapflow

#pragma once

#include "gapflow/coefficients.hpp"
#include "gapflow/gap.hpp"
#include "gapflow/geometry.hpp"
#include "gapflow/grid.hpp"
#include "gapflow/model.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <functional>
#include <variant>
#include <vector>

namespace gapflow {

// Leading-order boundary data: V^0, W^0, pi_0^0, pi_1^0 and the friction constant.
struct AsymptoticPrediction {
  std::function<void(double xi1, double xi2, double t, double V[2], double W[2])> velocity;
  std::function<double(double xi1, double xi2, double t)> pi0;
  std::function<double(double xi1, double xi2, double t)> pi1;
  double CR1 = 0.0;
  double s0 = -1.0;
};

struct LimitProblem {
  ChartPtr chart;
  GapField gap;
  FluidProperties fluid;
  Grid grid;
  AsymptoticPrediction pred;
  // Dirichlet traces on non-periodic sides.
  std::function<double(double xi1, double xi2, double t)> p_boundary;
  std::function<void(double xi1, double xi2, double t, double V[2])> v_boundary;
  // Leading body-force moment fbar_i^{0,0}.
  std::function<void(double xi1, double xi2, double t, double f[2])> body;
  int threads = 0;
};

struct Lubrication {
  Grid grid;
  double t = 0.0;
  std::vector<double> p;   // p^{0,-2}
  std::vector<double> u3;  // dX/dt . a3
};

struct ThinFilm {
  Grid grid;
  double t = 0.0;
  std::vector<double> V[2];
  std::vector<double> p00;         // pi_0^0 + (2 mu / h) dh/dt
  std::vector<double> h_residual;  // gap-consistency residual
};

using LimitSolution = std::variant<Lubrication, ThinFilm>;

// Discrete Reynolds operator scaled by sqrt(A^0): symmetric, rows of Dirichlet
// nodes are identity rows.
Eigen::SparseMatrix<double> reynolds_matrix(const LimitProblem& pb, double t);
// sqrt(A^0) times the right-hand side of the Reynolds equation (interior nodes).
std::vector<double> reynolds_source(const LimitProblem& pb, double t);

// Dirichlet sides take p_boundary (0 when unset); fully periodic grids use a
// zero-mean gauge. SingularOperator when the factorisation fails.
Lubrication solve_reynolds(const LimitProblem& pb, double t);

// Components of the velocity in the basis a_k at height xi3. Xi3OutOfRange.
std::array<double, 3> reconstruct_lubrication_velocity(const LimitProblem& pb, const Lubrication& sol, int node,
                                                       double xi3);
// Moment form of the same profile: ubar^0..3 (tangential) per node.
void lubrication_moments(const LimitProblem& pb, const Lubrication& sol, std::vector<double> u[kMom][2]);

// Lateral traces for the new model taken from a lubrication solution on the same
// grid: ubar^n from the profile, pbar^0 = p / eps^2.
TraceFn lubrication_traces(const LimitProblem& pb, const Lubrication& sol, double eps);

struct ThinFilmOptions {
  bool upwind = true;  // first-order upwind advection; central otherwise
};

class ThinFilmSolver {
 public:
  explicit ThinFilmSolver(LimitProblem pb, ThinFilmOptions opts = {});

  const LimitProblem& problem() const { return pb_; }

  // V^0 from the prediction (or zero) with derived fields filled.
  ThinFilm initial(double t) const;
  ThinFilm from_fields(double t, const std::vector<double> V[2]) const;
  // Implicit Euler with lagged advection velocity and friction.
  void step(ThinFilm& s, double dt) const;
  // Recomputes p00 and the gap-consistency residual at s.t.
  void derive(ThinFilm& s) const;

 private:
  LimitProblem pb_;
  ThinFilmOptions opts_;
  Differentiator D_;
};

// dh/dt + h (dX/dt . a3) A^1/A^0 + (h / sqrt(A^0)) div(sqrt(A^0) V) at the nodes.
std::vector<double> gap_consistency_residual(const LimitProblem& pb, double t, const std::vector<double> V[2]);

// Integrates the gap-consistency relation dh/dt = -h (w A^1/A^0 + div(sqrt(A^0) V)/sqrt(A^0))
// for a frozen velocity field with classical RK4.
std::vector<double> evolve_consistent_gap(const LimitProblem& pb, const std::vector<double>& h0,
                                          const std::vector<double> V[2], double t0, double t1, int steps);

// pi_0^0 + (2 mu / h) dh/dt at one point.
double thin_film_pressure(double pi0, double mu, double h, double ht);

}  // namespace gapflow

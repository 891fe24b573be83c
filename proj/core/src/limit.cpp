#include "gapflow/limit.hpp"

#include "gapflow/errors.hpp"
#include "sparse_lu.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

namespace gapflow {

namespace {

using Trip = Eigen::Triplet<double>;

// Neighbour of (i, j) shifted by (di, dj), wrapped on periodic axes.
int shifted(const Grid& g, int i, int j, int di, int dj) {
  int a = i + di, b = j + dj;
  if (g.periodic[0]) a = (a % g.nodes(0) + g.nodes(0)) % g.nodes(0);
  if (g.periodic[1]) b = (b % g.nodes(1) + g.nodes(1)) % g.nodes(1);
  return g.index(a, b);
}

double xcoord(const Grid& g, int node) { return g.coord(0, g.ix(node)); }
double ycoord(const Grid& g, int node) { return g.coord(1, g.jx(node)); }

bool fully_periodic(const Grid& g) { return g.periodic[0] && g.periodic[1]; }

std::vector<CoefficientTable> tables(const LimitProblem& pb, double t) {
  if (!pb.chart) throw Error("limit problem has no chart");
  return table_over_grid(*pb.chart, pb.gap, pb.grid, t, 3, pb.threads);
}

void velocities(const LimitProblem& pb, int node, double t, double V[2], double W[2]) {
  V[0] = V[1] = W[0] = W[1] = 0.0;
  if (pb.pred.velocity) pb.pred.velocity(xcoord(pb.grid, node), ycoord(pb.grid, node), t, V, W);
}

// Central first difference at an interior node.
double central(const Grid& g, const std::vector<double>& f, int node, int axis) {
  const int i = g.ix(node), j = g.jx(node);
  const int p = shifted(g, i, j, axis == 0, axis == 1), m = shifted(g, i, j, -(axis == 0), -(axis == 1));
  return (f[p] - f[m]) / (2.0 * g.dx(axis));
}

Eigen::SparseMatrix<double> assemble_reynolds(const LimitProblem& pb, const std::vector<CoefficientTable>& tab) {
  const Grid& g = pb.grid;
  const int N = g.size();
  const double mu = pb.fluid.mu();
  std::vector<double> K[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      K[a][b].resize(N);
      for (int n = 0; n < N; ++n) {
        const CoefficientTable& c = tab[n];
        K[a][b][n] = c.sqrtA0 * std::pow(c.gap.h, 3) * c.J[0][0][a][b] / (12.0 * mu);
      }
    }
  std::vector<Trip> trip;
  trip.reserve(static_cast<size_t>(N) * 13);
  for (int n = 0; n < N; ++n) {
    if (g.boundary(n)) {
      trip.emplace_back(n, n, 1.0);
      continue;
    }
    const int i = g.ix(n), j = g.jx(n);
    for (int a = 0; a < 2; ++a) {
      const int da = a == 0, db = a == 1;
      const int p = shifted(g, i, j, da, db), m = shifted(g, i, j, -da, -db);
      const double h2 = g.dx(a) * g.dx(a);
      const double kp = 0.5 * (K[a][a][n] + K[a][a][p]), km = 0.5 * (K[a][a][n] + K[a][a][m]);
      trip.emplace_back(n, p, kp / h2);
      trip.emplace_back(n, m, km / h2);
      trip.emplace_back(n, n, -(kp + km) / h2);
      // d_a (K_ab d_b p), b != a, central-central
      const int b = 1 - a;
      const double s = 1.0 / (4.0 * g.dx(a) * g.dx(b));
      for (int sa : {1, -1}) {
        const int ia = i + sa * da, ja = j + sa * db;
        const int outer = shifted(g, ia, ja, 0, 0);
        const double k = K[a][b][outer] * sa * s;
        trip.emplace_back(n, shifted(g, ia, ja, b == 0, b == 1), k);
        trip.emplace_back(n, shifted(g, ia, ja, -(b == 0), -(b == 1)), -k);
      }
    }
  }
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

std::vector<double> assemble_source(const LimitProblem& pb, const std::vector<CoefficientTable>& tab, double t) {
  const Grid& g = pb.grid;
  const int N = g.size();
  std::vector<double> S[2], Dv[2];
  for (int l = 0; l < 2; ++l) {
    S[l].assign(N, 0.0);
    Dv[l].assign(N, 0.0);
  }
  for (int n = 0; n < N; ++n) {
    double V[2], W[2];
    velocities(pb, n, t, V, W);
    for (int l = 0; l < 2; ++l) {
      S[l][n] = tab[n].sqrtA0 * (W[l] + V[l]);
      Dv[l][n] = W[l] - V[l];
    }
  }
  std::vector<double> r(N, 0.0);
  for (int n = 0; n < N; ++n) {
    if (g.boundary(n)) continue;
    const CoefficientTable& c = tab[n];
    const double h = c.gap.h;
    double v = c.sqrtA0 * (c.gap.ht + h * c.w * c.forms.A1 / c.forms.A0);
    for (int l = 0; l < 2; ++l) v += 0.5 * h * central(g, S[l], n, l) - 0.5 * c.sqrtA0 * c.gap.dh[l] * Dv[l][n];
    r[n] = v;
  }
  return r;
}

}  // namespace

Eigen::SparseMatrix<double> reynolds_matrix(const LimitProblem& pb, double t) {
  return assemble_reynolds(pb, tables(pb, t));
}

std::vector<double> reynolds_source(const LimitProblem& pb, double t) {
  return assemble_source(pb, tables(pb, t), t);
}

Lubrication solve_reynolds(const LimitProblem& pb, double t) {
  const Grid& g = pb.grid;
  const int N = g.size();
  const auto tab = tables(pb, t);
  SpMat A = assemble_reynolds(pb, tab);
  std::vector<double> rhs = assemble_source(pb, tab, t);
  for (int n = 0; n < N; ++n)
    if (g.boundary(n)) rhs[n] = pb.p_boundary ? pb.p_boundary(xcoord(g, n), ycoord(g, n), t) : 0.0;
  const bool gauge = fully_periodic(g);
  const int M = N + (gauge ? 1 : 0);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
  for (int n = 0; n < N; ++n) b[n] = rhs[n];
  if (gauge) {
    std::vector<Trip> trip;
    trip.reserve(A.nonZeros() + 2 * N);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int n = 0; n < N; ++n) {
      trip.emplace_back(n, N, 1.0);
      trip.emplace_back(N, n, 1.0 / N);
    }
    A.resize(M, M);
    A.setFromTriplets(trip.begin(), trip.end());
  }
  SparseLU lu;
  if (!lu.factor(A)) throw SingularOperator("Reynolds operator is singular");
  const Eigen::VectorXd x = lu.solve(b);
  Lubrication sol;
  sol.grid = g;
  sol.t = t;
  sol.p.assign(x.data(), x.data() + N);
  sol.u3.resize(N);
  for (int n = 0; n < N; ++n) sol.u3[n] = tab[n].w;
  return sol;
}

namespace {

// Poiseuille factor h^2 / (2 mu) J grad p at every node.
void poiseuille(const LimitProblem& pb, const Lubrication& sol, std::vector<double> out[2]) {
  const Grid& g = pb.grid;
  const int N = g.size();
  const Differentiator D(g, 2);
  const auto tab = tables(pb, sol.t);
  for (int i = 0; i < 2; ++i) out[i].assign(N, 0.0);
  for (int n = 0; n < N; ++n) {
    const double dp[2] = {D.d(sol.p, n, kD1), D.d(sol.p, n, kD2)};
    const double h = tab[n].gap.h;
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) out[i][n] += h * h / (2.0 * pb.fluid.mu()) * tab[n].J[0][0][i][k] * dp[k];
  }
}

}  // namespace

std::array<double, 3> reconstruct_lubrication_velocity(const LimitProblem& pb, const Lubrication& sol, int node,
                                                       double xi3) {
  if (!(xi3 >= 0.0 && xi3 <= 1.0)) throw Xi3OutOfRange("xi3 must lie in [0, 1]");
  std::vector<double> P[2];
  poiseuille(pb, sol, P);
  double V[2], W[2];
  velocities(pb, node, sol.t, V, W);
  std::array<double, 3> u{};
  for (int i = 0; i < 2; ++i) u[i] = (xi3 * xi3 - xi3) * P[i][node] + xi3 * (W[i] - V[i]) + V[i];
  u[2] = sol.u3[node];
  return u;
}

void lubrication_moments(const LimitProblem& pb, const Lubrication& sol, std::vector<double> u[kMom][2]) {
  std::vector<double> P[2];
  poiseuille(pb, sol, P);
  const int N = pb.grid.size();
  for (int n = 0; n < kMom; ++n)
    for (int i = 0; i < 2; ++i) u[n][i].assign(N, 0.0);
  for (int node = 0; node < N; ++node) {
    double V[2], W[2];
    velocities(pb, node, sol.t, V, W);
    for (int i = 0; i < 2; ++i) {
      u[0][i][node] = V[i];
      u[1][i][node] = W[i] - V[i] - P[i][node];
      u[2][i][node] = P[i][node];
    }
  }
}

TraceFn lubrication_traces(const LimitProblem& pb, const Lubrication& sol, double eps) {
  auto mom = std::make_shared<std::array<std::vector<double>, 2 * kMom + 1>>();
  {
    std::vector<double> u[kMom][2];
    lubrication_moments(pb, sol, u);
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) (*mom)[2 * n + i] = std::move(u[n][i]);
    (*mom)[2 * kMom] = sol.p;
    for (double& v : (*mom)[2 * kMom]) v /= eps * eps;
  }
  const Grid g = pb.grid;
  return [g, mom](double x, double y, double, double out[9]) {
    const int i = static_cast<int>(std::lround((x - g.D.lo[0]) / g.dx(0)));
    const int j = static_cast<int>(std::lround((y - g.D.lo[1]) / g.dx(1)));
    const int node = g.index(std::clamp(i, 0, g.nodes(0) - 1), std::clamp(j, 0, g.nodes(1) - 1));
    for (int k = 0; k <= 2 * kMom; ++k) out[k] = (*mom)[k][node];
  };
}

double thin_film_pressure(double pi0, double mu, double h, double ht) { return pi0 + 2.0 * mu / h * ht; }

std::vector<double> gap_consistency_residual(const LimitProblem& pb, double t, const std::vector<double> V[2]) {
  const Grid& g = pb.grid;
  const int N = g.size();
  const Differentiator D(g, 2);
  const auto tab = tables(pb, t);
  std::vector<double> q[2];
  for (int l = 0; l < 2; ++l) {
    q[l].resize(N);
    for (int n = 0; n < N; ++n) q[l][n] = tab[n].sqrtA0 * V[l][n];
  }
  std::vector<double> r(N);
  for (int n = 0; n < N; ++n) {
    const CoefficientTable& c = tab[n];
    const double h = c.gap.h;
    const double div = D.d(q[0], n, kD1) + D.d(q[1], n, kD2);
    r[n] = c.gap.ht + h * c.w * c.forms.A1 / c.forms.A0 + h / c.sqrtA0 * div;
  }
  return r;
}

std::vector<double> evolve_consistent_gap(const LimitProblem& pb, const std::vector<double>& h0,
                                          const std::vector<double> V[2], double t0, double t1, int steps) {
  if (steps < 1) throw Error("steps must be positive");
  const Grid& g = pb.grid;
  const int N = g.size();
  const Differentiator D(g, 2);
  // rate(t) = w A^1/A^0 + div(sqrt(A^0) V) / sqrt(A^0), so dh/dt = -h rate
  auto rate = [&](double t) {
    std::vector<double> sq(N), wa(N), q[2];
    for (int n = 0; n < N; ++n) {
      const FrameSample fr = evaluate_frame(*pb.chart, xcoord(g, n), ycoord(g, n), t);
      const FundamentalForms fo = fundamental_forms(fr);
      sq[n] = std::sqrt(fo.A0);
      wa[n] = fr.normal_speed() * fo.A1 / fo.A0;
    }
    for (int l = 0; l < 2; ++l) {
      q[l].resize(N);
      for (int n = 0; n < N; ++n) q[l][n] = sq[n] * V[l][n];
    }
    std::vector<double> r(N);
    for (int n = 0; n < N; ++n) r[n] = wa[n] + (D.d(q[0], n, kD1) + D.d(q[1], n, kD2)) / sq[n];
    return r;
  };
  std::vector<double> h = h0;
  const double dt = (t1 - t0) / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * dt;
    const auto r0 = rate(t), rh = rate(t + 0.5 * dt), r1 = rate(t + dt);
    for (int n = 0; n < N; ++n) {
      const double k1 = -h[n] * r0[n];
      const double k2 = -(h[n] + 0.5 * dt * k1) * rh[n];
      const double k3 = -(h[n] + 0.5 * dt * k2) * rh[n];
      const double k4 = -(h[n] + dt * k3) * r1[n];
      h[n] += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return h;
}

ThinFilmSolver::ThinFilmSolver(LimitProblem pb, ThinFilmOptions opts)
    : pb_(std::move(pb)), opts_(opts), D_(pb_.grid, 2) {
  if (!pb_.chart) throw Error("limit problem has no chart");
}

ThinFilm ThinFilmSolver::initial(double t) const {
  const int N = pb_.grid.size();
  std::vector<double> V[2];
  for (int i = 0; i < 2; ++i) V[i].assign(N, 0.0);
  for (int n = 0; n < N; ++n) {
    double v[2], w[2];
    velocities(pb_, n, t, v, w);
    V[0][n] = v[0];
    V[1][n] = v[1];
  }
  return from_fields(t, V);
}

ThinFilm ThinFilmSolver::from_fields(double t, const std::vector<double> V[2]) const {
  ThinFilm s;
  s.grid = pb_.grid;
  s.t = t;
  s.V[0] = V[0];
  s.V[1] = V[1];
  derive(s);
  return s;
}

void ThinFilmSolver::derive(ThinFilm& s) const {
  const Grid& g = pb_.grid;
  const int N = g.size();
  s.p00.resize(N);
  for (int n = 0; n < N; ++n) {
    const GapSample gs = pb_.gap.eval(xcoord(g, n), ycoord(g, n), s.t);
    const double pi0 = pb_.pred.pi0 ? pb_.pred.pi0(xcoord(g, n), ycoord(g, n), s.t) : 0.0;
    s.p00[n] = thin_film_pressure(pi0, pb_.fluid.mu(), gs.h, gs.ht);
  }
  s.h_residual = gap_consistency_residual(pb_, s.t, s.V);
}

void ThinFilmSolver::step(ThinFilm& s, double dt) const {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  const Grid& g = pb_.grid;
  const int N = g.size();
  const double t1 = s.t + dt;
  const double nu = pb_.fluid.nu, rho0 = pb_.fluid.rho0;
  auto tab = tables(pb_, t1);
  std::vector<double> pi0(N, 0.0);
  if (pb_.pred.pi0)
    for (int n = 0; n < N; ++n) pi0[n] = pb_.pred.pi0(xcoord(g, n), ycoord(g, n), t1);

  std::vector<Trip> trip;
  trip.reserve(static_cast<size_t>(N) * 2 * 24);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * N);
  std::vector<WeightedNode> w;
  for (int n = 0; n < N; ++n) {
    if (g.boundary(n)) {
      double v[2] = {0.0, 0.0};
      if (pb_.v_boundary) pb_.v_boundary(xcoord(g, n), ycoord(g, n), t1, v);
      for (int i = 0; i < 2; ++i) {
        trip.emplace_back(2 * n + i, 2 * n + i, 1.0);
        b[2 * n + i] = v[i];
      }
      continue;
    }
    CoefficientTable& c = tab[n];
    const double Vn[2] = {s.V[0][n], s.V[1][n]};
    // lagged friction and body force
    ForceTerms ft;
    ft.have_friction = true;
    ft.s0 = pb_.pred.s0;
    ft.rho0 = rho0;
    if (pb_.pred.CR1 != 0.0) {
      const Vec3 U = c.frame.a[0] * Vn[0] + c.frame.a[1] * Vn[1] + c.frame.a[2] * c.w;
      ft.fR_sum = 2.0 * rho0 * pb_.pred.CR1 * U.norm() * U;
    }
    if (pb_.body) pb_.body(xcoord(g, n), ycoord(g, n), t1, ft.f00);
    apply_force_terms(c, ft);
    const double dpi[2] = {D_.d(pi0, n, kD1), D_.d(pi0, n, kD2)};
    for (int i = 0; i < 2; ++i) {
      const int row = 2 * n + i;
      auto add = [&](int node, int k, double v) { trip.emplace_back(row, 2 * node + k, v); };
      add(n, i, 1.0 / dt);
      // advection with lagged velocity
      for (int l = 0; l < 2; ++l) {
        const double a = Vn[l] - c.C0[l];
        if (a == 0.0) continue;
        if (opts_.upwind) {
          const int ii = g.ix(n), jj = g.jx(n);
          const int sgn = a > 0.0 ? -1 : 1;
          const int other = shifted(g, ii, jj, sgn * (l == 0), sgn * (l == 1));
          const double inv = 1.0 / g.dx(l);
          add(n, i, a * (a > 0.0 ? inv : -inv));
          add(other, i, a * (a > 0.0 ? -inv : inv));
        } else {
          D_.weights(n, l == 0 ? kD1 : kD2, w);
          for (const auto& wn : w) add(wn.node, i, a * wn.w);
        }
      }
      for (int k = 0; k < 2; ++k) {
        double r = c.R[i][k] - nu * c.Sbar[i][k];
        for (int l = 0; l < 2; ++l) r += c.H[0][i][l][k] * Vn[l];
        if (r != 0.0) add(n, k, r);
      }
      // viscous terms
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m) {
          const double J = c.J[0][0][l][m];
          if (J == 0.0) continue;
          const Comp cc = l != m ? kD12 : (l == 0 ? kD11 : kD22);
          D_.weights(n, cc, w);
          for (const auto& wn : w) add(wn.node, i, -nu * J * wn.w);
        }
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
          const double L = c.Lbar[i][k][l];
          if (L == 0.0) continue;
          D_.weights(n, l == 0 ? kD1 : kD2, w);
          for (const auto& wn : w) add(wn.node, k, -nu * L * wn.w);
        }
      double rhs = Vn[i] / dt + nu * c.kappa[i] + c.Fbar[i] - c.Q[i][2] * c.w;
      for (int l = 0; l < 2; ++l) rhs -= c.J[0][0][i][l] * dpi[l] / rho0;
      b[row] = rhs;
    }
  }
  SpMat A(2 * N, 2 * N);
  A.setFromTriplets(trip.begin(), trip.end());
  SparseLU lu;
  if (!lu.factor(A)) throw NonConvergence("thin-film step: singular system", 0, {});
  const Eigen::VectorXd x = lu.solve(b);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(x[2 * n + i])) throw NonConvergence("thin-film step produced non-finite values", 0, {});
      s.V[i][n] = x[2 * n + i];
    }
  s.t = t1;
  derive(s);
}

}  // namespace gapflow

#include "gapflow/errors.hpp"
#include "gapflow/limit.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gapflow;

namespace {

// Classical slider: h^3 p' = 6 mu U h + C, p(0) = p(1) = 0, by RK4 shooting.
struct SliderOracle {
  double ha, hb, U, mu, C = 0.0;
  double h(double x) const { return ha + (hb - ha) * x; }
  double rhs(double x, double c) const { return (6.0 * mu * U * h(x) + c) / std::pow(h(x), 3); }
  double shoot(double c, double x1, int steps = 4000) const {
    double p = 0.0;
    const double dx = x1 / steps;
    for (int k = 0; k < steps; ++k) {
      const double x = k * dx;
      p += dx / 6.0 * (rhs(x, c) + 4.0 * rhs(x + 0.5 * dx, c) + rhs(x + dx, c));
    }
    return p;
  }
  SliderOracle(double a, double b, double u, double m) : ha(a), hb(b), U(u), mu(m) {
    // p(1) is affine in C
    const double p0 = shoot(0.0, 1.0), p1 = shoot(1.0, 1.0);
    C = -p0 / (p1 - p0);
  }
  double p(double x) const { return shoot(C, x, 400); }
};

LimitProblem slider(int n, double U = 1.0) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("linear-slider", {{"ha", 2.0}, {"hb", 1.0}}, 0.1, 0.1);
  pb.grid.n[0] = n;
  pb.grid.n[1] = 4;
  pb.grid.periodic[0] = false;
  pb.pred.velocity = [U](double, double, double, double V[2], double W[2]) {
    V[0] = U;
    V[1] = W[0] = W[1] = 0.0;
  };
  return pb;
}

double slider_error(int n) {
  const LimitProblem pb = slider(n);
  const Lubrication s = solve_reynolds(pb, 0.0);
  const SliderOracle o(2.0, 1.0, 1.0, 1.0);
  double e = 0.0, r = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double pe = o.p(pb.grid.coord(0, i));
    e += std::pow(s.p[pb.grid.index(i, 1)] - pe, 2);
    r += pe * pe;
  }
  return std::sqrt(e / r);
}

}  // namespace

TEST(Reynolds, StaticPlaneKeepsBoundaryPressure) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("constant", {{"value", 1.0}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = 8;
  pb.grid.periodic[0] = pb.grid.periodic[1] = false;
  pb.p_boundary = [](double, double, double) { return 3.5; };
  const Lubrication s = solve_reynolds(pb, 0.0);
  for (double v : s.p) EXPECT_NEAR(v, 3.5, 1e-12);
}

TEST(Reynolds, SliderMatchesBoundaryValueOracle) {
  const double e32 = slider_error(32), e64 = slider_error(64), e128 = slider_error(128);
  EXPECT_LT(e128, 1e-3);
  const double order = std::log2(e32 / e64) * 0.5 + std::log2(e64 / e128) * 0.5;
  EXPECT_GT(order, 1.8) << e32 << " " << e64 << " " << e128;
}

TEST(Reynolds, SqueezeMatchesDiscreteSineSeries) {
  const int n = 16;
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("squeeze-linear", {{"value", 1.0}, {"rate", 1.0}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = n;
  pb.grid.periodic[0] = pb.grid.periodic[1] = false;
  const Lubrication s = solve_reynolds(pb, 0.0);
  // Delta_h p = -12 mu / h^3 with h = 1: expand in the discrete sine basis
  const double dx = 1.0 / n, f = -12.0;
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) {
      double p = 0.0;
      for (int a = 1; a < n; ++a)
        for (int b = 1; b < n; ++b) {
          double fa = 0.0, fb = 0.0;
          for (int k = 1; k < n; ++k) {
            fa += std::sin(M_PI * a * k / n);
            fb += std::sin(M_PI * b * k / n);
          }
          const double coef = f * fa * fb * 4.0 / (n * n);
          const double lam = -4.0 / (dx * dx) * (std::pow(std::sin(M_PI * a / (2 * n)), 2) +
                                                  std::pow(std::sin(M_PI * b / (2 * n)), 2));
          p += coef / lam * std::sin(M_PI * a * i / n) * std::sin(M_PI * b * j / n);
        }
      EXPECT_NEAR(s.p[pb.grid.index(i, j)], p, 1e-10);
    }
}

TEST(Reynolds, PeriodicOperatorIsSymmetricWithConstantNullspace) {
  LimitProblem pb;
  pb.chart = std::make_shared<WavyPlaneChart>(0.1, 1.0, 1.0);
  pb.gap = GapField("gaussian-bump", {{"value", 1.0}, {"amp", 0.3}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = 12;
  const Eigen::SparseMatrix<double> A = reynolds_matrix(pb, 0.0);
  const Eigen::MatrixXd M = Eigen::MatrixXd(A);
  EXPECT_LT((M - M.transpose()).cwiseAbs().maxCoeff(), 1e-12 * M.cwiseAbs().maxCoeff());
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(M.rows());
  EXPECT_LT((M * one).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  EXPECT_LT(es.eigenvalues().maxCoeff(), 1e-9);
}

TEST(Reynolds, PeriodicMassBalance) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("cosine", {{"value", 1.0}, {"amp", 0.4}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = 16;
  pb.pred.velocity = [](double x, double y, double, double V[2], double W[2]) {
    V[0] = 1.0 + 0.2 * std::sin(2 * M_PI * y);
    V[1] = 0.1 * std::cos(2 * M_PI * x);
    W[0] = W[1] = 0.0;
  };
  const Lubrication s = solve_reynolds(pb, 0.0);
  const Eigen::SparseMatrix<double> A = reynolds_matrix(pb, 0.0);
  const std::vector<double> src = reynolds_source(pb, 0.0);
  Eigen::VectorXd p(s.p.size());
  for (size_t k = 0; k < s.p.size(); ++k) p[k] = s.p[k];
  const Eigen::VectorXd Ap = A * p;
  EXPECT_LT(std::abs(Ap.sum()), 1e-10);
  double src_sum = 0.0;
  for (double v : src) src_sum += v;
  EXPECT_LT(std::abs(src_sum), 1e-10);
  for (int k = 0; k < Ap.size(); ++k) EXPECT_NEAR(Ap[k], src[k], 1e-9);
}

TEST(Reynolds, VelocityProfile) {
  const LimitProblem pb = slider(32);
  const Lubrication s = solve_reynolds(pb, 0.0);
  const int node = pb.grid.index(10, 1);
  const auto lo = reconstruct_lubrication_velocity(pb, s, node, 0.0);
  const auto hi = reconstruct_lubrication_velocity(pb, s, node, 1.0);
  EXPECT_DOUBLE_EQ(lo[0], 1.0);
  EXPECT_NEAR(hi[0], 0.0, 1e-15);
  EXPECT_EQ(lo[2], 0.0);
  // midplane: Couette mean minus h^2 / (8 mu) dp/dxi1
  const double dx = pb.grid.dx(0);
  const double dp = (s.p[pb.grid.index(11, 1)] - s.p[pb.grid.index(9, 1)]) / (2 * dx);
  const double h = 2.0 - pb.grid.coord(0, 10);
  const auto mid = reconstruct_lubrication_velocity(pb, s, node, 0.5);
  EXPECT_NEAR(mid[0], 0.5 - h * h / 8.0 * dp, 1e-12);
  EXPECT_THROW(reconstruct_lubrication_velocity(pb, s, node, 1.5), Xi3OutOfRange);
}

TEST(Reynolds, ZeroGradientGivesCouette) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("constant", {{"value", 1.0}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = 8;
  pb.pred.velocity = [](double, double, double, double V[2], double W[2]) {
    V[0] = 1.0;
    V[1] = 0.5;
    W[0] = -1.0;
    W[1] = 2.0;
  };
  const Lubrication s = solve_reynolds(pb, 0.0);
  for (double xi3 : {0.0, 0.3, 0.8}) {
    const auto u = reconstruct_lubrication_velocity(pb, s, 5, xi3);
    EXPECT_NEAR(u[0], 1.0 - 2.0 * xi3, 1e-12);
    EXPECT_NEAR(u[1], 0.5 + 1.5 * xi3, 1e-12);
  }
}

TEST(ThinFilm, ConstantStateIsPreserved) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("constant", {{"value", 1.0}}, 0.1, 0.1);
  pb.grid.n[0] = pb.grid.n[1] = 8;
  pb.pred.velocity = [](double, double, double, double V[2], double W[2]) {
    V[0] = W[0] = 0.7;
    V[1] = W[1] = -0.3;
  };
  pb.pred.pi0 = [](double, double, double) { return 2.0; };
  for (bool upwind : {true, false}) {
    ThinFilmSolver tf(pb, {upwind});
    ThinFilm s = tf.initial(0.0);
    for (int k = 0; k < 100; ++k) tf.step(s, 0.01);
    for (size_t n = 0; n < s.V[0].size(); ++n) {
      EXPECT_NEAR(s.V[0][n], 0.7, 1e-12);
      EXPECT_NEAR(s.V[1][n], -0.3, 1e-12);
    }
  }
}

TEST(ThinFilm, GapConsistencyFollowsExponential) {
  const double c = 0.8;
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("squeeze-exp", {{"value", 1.0}, {"rate", c}}, 0.1, 0.01);
  pb.grid.n[0] = pb.grid.n[1] = 8;
  pb.grid.periodic[0] = pb.grid.periodic[1] = false;
  const int N = pb.grid.size();
  std::vector<double> V[2];
  V[0].resize(N);
  V[1].assign(N, 0.0);
  for (int n = 0; n < N; ++n) V[0][n] = c * pb.grid.coord(0, pb.grid.ix(n));
  const std::vector<double> h = evolve_consistent_gap(pb, std::vector<double>(N, 1.0), V, 0.0, 1.0, 50);
  for (double v : h) EXPECT_NEAR(v, std::exp(-c), 1e-6);
  for (double t : {0.0, 0.5, 1.0})
    for (double r : gap_consistency_residual(pb, t, V)) EXPECT_NEAR(r, 0.0, 1e-12);
  // any other decay rate leaves a residual
  pb.gap = GapField("squeeze-exp", {{"value", 1.0}, {"rate", 0.5}}, 0.1, 0.01);
  for (double r : gap_consistency_residual(pb, 0.2, V)) EXPECT_GT(std::abs(r), 0.1);
}

TEST(ThinFilm, PressureLaw) {
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("wave-consistent", {{"value", 1.0}, {"a", 0.1}}, 0.1, 0.1);
  pb.fluid.nu = 0.3;
  pb.fluid.rho0 = 2.0;
  pb.grid.n[0] = pb.grid.n[1] = 8;
  pb.pred.pi0 = [](double x, double, double t) { return 1.0 + x * t; };
  ThinFilmSolver tf(pb);
  ThinFilm s = tf.initial(0.0);
  tf.step(s, 0.05);
  for (int n = 0; n < pb.grid.size(); ++n) {
    const double x = pb.grid.coord(0, pb.grid.ix(n)), y = pb.grid.coord(1, pb.grid.jx(n));
    const GapSample g = pb.gap.eval(x, y, s.t);
    EXPECT_NEAR(s.p00[n], 1.0 + x * s.t + 2.0 * 0.6 / g.h * g.ht, 1e-12);
  }
}

TEST(ThinFilm, ManufacturedSteadyWaveIsHeld) {
  // V = (a sin 2 pi x, 0) on the matching gap, held by a body force.
  const double a = 0.1, k = 2 * M_PI, nu = 0.5;
  LimitProblem pb;
  pb.chart = std::make_shared<PlaneChart>();
  pb.gap = GapField("wave-consistent", {{"value", 1.0}, {"a", a}}, 0.1, 0.1);
  pb.fluid.nu = nu;
  pb.grid.n[0] = 64;
  pb.grid.n[1] = 4;
  pb.pred.velocity = [=](double x, double, double, double V[2], double W[2]) {
    V[0] = W[0] = a * std::sin(k * x);
    V[1] = W[1] = 0.0;
  };
  pb.body = [=](double x, double y, double t, double f[2]) {
    const GapSample g = pb.gap.eval(x, y, t);
    const double v = a * std::sin(k * x), vx = a * k * std::cos(k * x), vxx = -a * k * k * std::sin(k * x);
    // extensional sheet (Trouton) stress: 4 nu (h v')' / h
    const double hx = g.dh[0] / g.h;
    f[0] = v * vx - 4.0 * nu * (vxx + hx * vx);
    f[1] = 0.0;
  };
  ThinFilmSolver tf(pb, {false});
  ThinFilm s = tf.initial(0.0);
  for (int n = 0; n < 10; ++n) tf.step(s, 0.01);
  double err = 0.0;
  for (int n = 0; n < pb.grid.size(); ++n)
    err = std::max(err, std::abs(s.V[0][n] - a * std::sin(k * pb.grid.coord(0, pb.grid.ix(n)))));
  EXPECT_LT(err, 1e-3);
  for (double r : s.h_residual) EXPECT_LT(std::abs(r), 1e-2);
}

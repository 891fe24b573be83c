#include "gapflow/coefficients.hpp"
#include "gapflow/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace gapflow;

namespace {

struct Case {
  ChartPtr chart;
  GapField gap;
};

std::vector<Case> cases() {
  GapField bump("gaussian-bump", {{"value", 1.0}, {"amp", 0.4}, {"width", 0.3}}, 0.1, 1e-3);
  return {
      {std::make_shared<PlaneChart>(0.2, -0.3, 0.5), bump},
      {std::make_shared<CylinderChart>(1.3), bump},
      {std::make_shared<SphereCapChart>(1.5, Rect{{0.5, 0.0}, {2.5, 1.0}}), bump},
      {std::make_shared<WavyPlaneChart>(0.08, 0.7, 1.5), bump},
  };
}

double relerr(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(AlphaBeta, FlatPlane) {
  PlaneChart p;
  const FundamentalForms f = fundamental_forms(evaluate_frame(p, 0.1, 0.2, 0.0));
  const double gh[2] = {0.3, -0.7};
  const AlphaBetaSeries s = alpha_beta(f, gh, 3);
  EXPECT_EQ(s.alpha[0][0], 1.0);
  EXPECT_EQ(s.alpha[1][0], 0.0);
  EXPECT_EQ(s.beta[1][0], 1.0);
  EXPECT_DOUBLE_EQ(s.alpha[2][0], -0.3);
  EXPECT_DOUBLE_EQ(s.beta[2][0], 0.7);
  for (int l = 0; l < 3; ++l)
    for (int n = 1; n <= s.order; ++n) {
      EXPECT_EQ(s.alpha[l][n], 0.0);
      EXPECT_EQ(s.beta[l][n], 0.0);
    }
}

TEST(AlphaBeta, RecursionStepHandValue) {
  // A0 = 2, A1 = 1, A2 = 0.5, alpha^0 = 0.5, alpha^1 = -0.75
  EXPECT_DOUBLE_EQ(series_step(0.5, -0.75, 2.0, 1.0, 0.5), 0.25);
}

TEST(AlphaBeta, UnitCylinder) {
  CylinderChart c(1.0);
  const FundamentalForms f = fundamental_forms(evaluate_frame(c, 0.7, 0.2, 0.0));
  const double gh[2] = {0.0, 0.0};
  const AlphaBetaSeries s = alpha_beta(f, gh, 3);
  EXPECT_NEAR(s.alpha[0][0], 1.0, 1e-14);
  EXPECT_NEAR(s.alpha[0][1], -f.A1, 1e-14);
  EXPECT_NEAR(s.alpha[0][1], -1.0, 1e-14);
}

TEST(AlphaBeta, RecursionsAndSymmetryOnCurvedCharts) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& cs : cases()) {
    const Rect d = cs.chart->domain();
    for (int k = 0; k < 100; ++k) {
      const double x = d.lo[0] + u(rng) * d.length(0), y = d.lo[1] + u(rng) * d.length(1);
      const FundamentalForms f = fundamental_forms(evaluate_frame(*cs.chart, x, y, 0.3));
      const GapSample g = cs.gap.eval(x, y, 0.3);
      const AlphaBetaSeries s = alpha_beta(f, g.dh, 3);
      for (int n = 0; n <= s.order; ++n) EXPECT_EQ(s.alpha[1][n], s.beta[0][n]);
      for (int n = 2; n <= s.order; ++n) {
        EXPECT_NEAR(s.alpha[0][n], -(s.alpha[0][n - 2] * f.A2 + s.alpha[0][n - 1] * f.A1) / f.A0, 1e-13);
        EXPECT_NEAR(s.beta[2][n], -(s.beta[2][n - 2] * f.A2 + s.beta[2][n - 1] * f.A1) / f.A0, 1e-13);
      }
      for (int n = 0; n <= 1; ++n) {
        EXPECT_NEAR(s.alpha[2][n], -s.alpha[0][n] * g.dh[0] - s.alpha[1][n] * g.dh[1], 1e-14);
        EXPECT_NEAR(s.beta[2][n], -s.beta[0][n] * g.dh[0] - s.beta[1][n] * g.dh[1], 1e-14);
      }
    }
  }
}

TEST(Coefficients, IdentitiesOnRandomNodes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& cs : cases()) {
    const Rect d = cs.chart->domain();
    for (int k = 0; k < 100; ++k) {
      const double x = d.lo[0] + u(rng) * d.length(0), y = d.lo[1] + u(rng) * d.length(1);
      const CoefficientTable c = coefficients_at(*cs.chart, cs.gap, x, y, 0.3);
      const Eigen::Matrix2d Minv = c.forms.M / c.forms.A0;
      for (int l = 0; l < 2; ++l) {
        for (int m = 0; m < 2; ++m) {
          EXPECT_LE(relerr(c.J[0][0][l][m], Minv(l, m)), 1e-12);
          EXPECT_LE(std::abs(c.B[0][l][m] - (l == m ? 1.0 : 0.0)), 1e-12);
          EXPECT_EQ(c.iota[0][l][m], c.J[0][0][l][m]);
        }
        EXPECT_LE(std::abs(c.J[0][0][l][0] - c.alpha[l][0]), 1e-12);
        EXPECT_LE(std::abs(c.J[0][0][l][1] - c.beta[l][0]), 1e-12);
      }
      const double h = c.gap.h;
      for (int i = 0; i < 2; ++i)
        for (int kk = 0; kk < 3; ++kk)
          for (int l = 0; l < 2; ++l) {
            const double dk = kk < 2 ? c.gap.dh[kk] : 0.0;
            const double rhs = dk / h * c.J[0][0][i][l] - (i == kk ? 1.0 : 0.0) / h * c.J[0][0][2][l];
            EXPECT_LE(std::abs((c.Lbar[i][kk][l] - c.L[0][0][i][kk][l]) - rhs), 1e-12);
          }
    }
  }
}

TEST(Coefficients, FlatStaticPlaneZeroes) {
  PlaneChart p(0.4, 0.1, -0.6);
  GapField g("constant", {{"value", 0.8}}, 0.1, 1e-3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const CoefficientTable c = coefficients_at(p, g, u(rng), u(rng), 0.0);
    auto zero = [](const double* v, std::size_t n, const char* what) {
      for (std::size_t i = 0; i < n; ++i) EXPECT_LE(std::abs(v[i]), 1e-14) << what << "[" << i << "]";
    };
    zero(c.C0, 3, "C0");
    zero(&c.Cij[0][0], sizeof(c.Cij) / sizeof(double), "Cij");
    zero(&c.D[0][0][0], sizeof(c.D) / sizeof(double), "D");
    zero(&c.H[0][0][0][0], sizeof(c.H) / sizeof(double), "H");
    zero(&c.I, 1, "I");
    zero(c.kappa, 2, "kappa");
    zero(c.eta, 3, "eta");
    zero(&c.Q[0][0], 9, "Q");
    zero(&c.R[0][0], 4, "R");
    zero(&c.S[0][0][0][0], sizeof(c.S) / sizeof(double), "S");
    zero(&c.S3[0][0][0], sizeof(c.S3) / sizeof(double), "S3");
    for (int l = 0; l < 3; ++l)
      for (int n = 0; n < kSeries; ++n) {
        EXPECT_EQ(c.alpha[2][n], 0.0);
        EXPECT_EQ(c.beta[2][n], 0.0);
      }
    zero(&c.K[0][0][0], sizeof(c.K) / sizeof(double), "K");
    for (int i = 0; i < 2; ++i)
      for (int kk = 0; kk < 3; ++kk) EXPECT_LE(std::abs(c.Sbar[i][kk] - c.S[0][0][i][kk]), 1e-14);
  }
}

TEST(Coefficients, EtaOnPlaneWithVaryingGap) {
  PlaneChart p;
  GapField g("gaussian-bump", {{"value", 1.0}, {"amp", 0.3}, {"width", 0.25}}, 0.1, 1e-3);
  const CoefficientTable c = coefficients_at(p, g, 0.3, 0.65, 0.0);
  EXPECT_NEAR(c.eta[0], -c.gap.dh[0], 1e-15);
  EXPECT_NEAR(c.eta[1], -c.gap.dh[1], 1e-15);
  EXPECT_NEAR(c.eta[2], 0.0, 1e-15);
  // flat plane facts used by the thin-film reduction
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(c.J[0][0][2][i], -c.gap.dh[i], 1e-15);
    EXPECT_EQ(c.R[i][0], 0.0);
    EXPECT_EQ(c.Q[i][2], 0.0);
  }
}

TEST(Coefficients, AlphaDerivativesMatchFiniteDifferences) {
  for (const auto& cs : cases()) {
    const Rect d = cs.chart->domain();
    const double x = d.lo[0] + 0.37 * d.length(0), y = d.lo[1] + 0.61 * d.length(1), st = 1e-5;
    const CoefficientTable c = coefficients_at(*cs.chart, cs.gap, x, y, 0.2);
    for (int m = 0; m < 2; ++m) {
      const CoefficientTable cp = coefficients_at(*cs.chart, cs.gap, x + (m == 0) * st, y + (m == 1) * st, 0.2);
      const CoefficientTable cm = coefficients_at(*cs.chart, cs.gap, x - (m == 0) * st, y - (m == 1) * st, 0.2);
      for (int l = 0; l < 3; ++l)
        for (int n = 0; n < kSeries; ++n) {
          const double fa = (cp.alpha[l][n] - cm.alpha[l][n]) / (2 * st);
          const double fb = (cp.beta[l][n] - cm.beta[l][n]) / (2 * st);
          EXPECT_NEAR(c.dalpha[l][n][m], fa, 1e-6 * std::max(1.0, std::abs(fa))) << cs.chart->name() << l << n;
          EXPECT_NEAR(c.dbeta[l][n][m], fb, 1e-6 * std::max(1.0, std::abs(fb))) << cs.chart->name() << l << n;
        }
    }
  }
}

TEST(Coefficients, ForceTermsNeedFriction) {
  PlaneChart p;
  GapField g("constant", {}, 0.1, 1e-3);
  CoefficientTable c = coefficients_at(p, g, 0.5, 0.5, 0.0);
  EXPECT_THROW(apply_force_terms(c, ForceTerms{}), MissingBoundaryData);
  ForceTerms ft;
  ft.have_friction = true;
  ft.fR_sum = Vec3(2.0, 0.0, 0.0);
  ft.f00[0] = 0.5;
  ft.s0 = -1.0;
  ft.rho0 = 2.0;
  apply_force_terms(c, ft);
  EXPECT_DOUBLE_EQ(c.Fbar[0], -1.0 / 2.0 * 2.0 + 0.5);
  EXPECT_DOUBLE_EQ(c.F[0], -1.0 / 2.0 * 2.0);
}

TEST(TableOverGrid, FlatTrivialAndDeterministic) {
  PlaneChart p;
  GapField g("constant", {}, 0.1, 1e-3);
  Grid grid;
  grid.n[0] = grid.n[1] = 2;
  const auto tabs = table_over_grid(p, g, grid, 0.0, 3, 1);
  ASSERT_EQ(tabs.size(), 4u);
  for (const auto& t : tabs) EXPECT_EQ(std::memcmp(t.J, tabs[0].J, sizeof(t.J)), 0);

  WavyPlaneChart w(0.1, 0.5, 1.0);
  GapField bump("gaussian-bump", {}, 0.1, 1e-3);
  Grid g2;
  g2.n[0] = 12;
  g2.n[1] = 9;
  const auto a = table_over_grid(w, bump, g2, 0.4, 3, 1);
  const auto b = table_over_grid(w, bump, g2, 0.4, 3, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(a[i].S, b[i].S, sizeof(a[i].S)), 0);
    EXPECT_EQ(std::memcmp(a[i].L, b[i].L, sizeof(a[i].L)), 0);
    EXPECT_EQ(std::memcmp(a[i].kappa, b[i].kappa, sizeof(a[i].kappa)), 0);
  }
}

TEST(TableOverGrid, PinchedNodeIsNamed) {
  SphereCapChart s(1.0, Rect{{0.0, 0.0}, {1.0, 1.0}});
  GapField g("constant", {}, 0.1, 1e-3);
  Grid grid;
  grid.D = s.domain();
  grid.periodic[0] = grid.periodic[1] = false;
  grid.n[0] = grid.n[1] = 4;
  try {
    table_over_grid(s, g, grid, 0.0, 3, 2);
    FAIL() << "expected DegenerateChart";
  } catch (const DegenerateChart& e) {
    EXPECT_NE(std::string(e.what()).find("node 0"), std::string::npos) << e.what();
  }
}

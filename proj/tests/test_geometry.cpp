#include "gapflow/errors.hpp"
#include "gapflow/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gapflow;

namespace {

void expect_vec(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

class WrongCurvatureCylinder : public CylinderChart {
 public:
  ChartJet evaluate(double a, double b, double t) const override {
    ChartJet j = CylinderChart::evaluate(a, b, t);
    j.d2[0][0] *= 1.01;
    return j;
  }
};

}  // namespace

TEST(Frame, PlaneIsTrivial) {
  PlaneChart p;
  const FrameSample fr = evaluate_frame(p, 0.3, 0.7, 0.0);
  expect_vec(fr.a[0], Vec3(1, 0, 0), 1e-15);
  expect_vec(fr.a[1], Vec3(0, 1, 0), 1e-15);
  expect_vec(fr.a[2], Vec3(0, 0, 1), 1e-15);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 2; ++l) EXPECT_EQ(fr.da[k][l].norm(), 0.0);
  const FundamentalForms f = fundamental_forms(fr);
  EXPECT_EQ(f.E, 1.0);
  EXPECT_EQ(f.G, 1.0);
  EXPECT_EQ(f.F, 0.0);
  EXPECT_EQ(f.A0, 1.0);
  EXPECT_EQ(f.A1, 0.0);
  EXPECT_EQ(f.A2, 0.0);
  EXPECT_TRUE(f.M.isIdentity(0.0));
}

TEST(Frame, UnitCylinderMatchesSymbolicValues) {
  CylinderChart c(1.0);
  for (double x1 : {0.0, 0.4, 1.3, 2.9}) {
    const FrameSample fr = evaluate_frame(c, x1, 0.25, 0.0);
    expect_vec(fr.a[0], Vec3(-std::sin(x1), std::cos(x1), 0), 1e-14);
    expect_vec(fr.a[2], Vec3(std::cos(x1), std::sin(x1), 0), 1e-14);
    // d a3 / d xi1 = a1 on the unit cylinder
    expect_vec(fr.da[2][0], fr.a[0], 1e-13);
    const FundamentalForms f = fundamental_forms(fr);
    EXPECT_NEAR(f.E, 1.0, 1e-14);
    EXPECT_NEAR(f.F, 0.0, 1e-14);
    EXPECT_NEAR(f.G, 1.0, 1e-14);
    EXPECT_NEAR(f.e, -1.0, 1e-14);
    EXPECT_NEAR(f.f, 0.0, 1e-14);
    EXPECT_NEAR(f.g, 0.0, 1e-14);
    EXPECT_NEAR(f.A0, 1.0, 1e-14);
    EXPECT_NEAR(f.A1, 1.0, 1e-14);
    EXPECT_NEAR(f.A2, 0.0, 1e-14);
  }
}

TEST(Frame, UnitSphereMatchesSymbolicValues) {
  SphereCapChart s(1.0, Rect{{0.3, 0.0}, {2.8, 6.0}});
  for (double th : {0.4, 1.0, 2.2})
    for (double ph : {0.1, 3.0}) {
      const FundamentalForms f = fundamental_forms(evaluate_frame(s, th, ph, 0.0));
      const double s2 = std::sin(th) * std::sin(th);
      EXPECT_NEAR(f.E, 1.0, 1e-13);
      EXPECT_NEAR(f.F, 0.0, 1e-13);
      EXPECT_NEAR(f.G, s2, 1e-13);
      EXPECT_NEAR(f.A0, s2, 1e-13);
      EXPECT_NEAR(f.e, -1.0, 1e-13);
      EXPECT_NEAR(f.g, -s2, 1e-13);
      EXPECT_NEAR(f.A1, 2.0 * s2, 1e-13);
      EXPECT_NEAR(f.A2, s2, 1e-13);
    }
}

TEST(Frame, TranslatingPlaneHasStaticBasis) {
  TranslatingPlaneChart p(0.7);
  const FrameSample fr = evaluate_frame(p, 0.2, 0.1, 1.5);
  expect_vec(fr.Xt, Vec3(0, 0, 0.7), 1e-15);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(fr.dadt[k].norm(), 0.0);
  EXPECT_DOUBLE_EQ(fr.normal_speed(), 0.7);
}

TEST(Frame, InvariantsOnCurvedCharts) {
  std::vector<ChartPtr> charts = {
      std::make_shared<CylinderChart>(1.7), std::make_shared<SphereCapChart>(2.0, Rect{{0.4, 0.0}, {2.7, 6.0}}),
      std::make_shared<WavyPlaneChart>(0.1, 1.0, 2.0), std::make_shared<PlaneChart>(0.3, -0.2, 0.9)};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& ch : charts) {
    const Rect d = ch->domain();
    for (int s = 0; s < 50; ++s) {
      const double x = d.lo[0] + u(rng) * d.length(0), y = d.lo[1] + u(rng) * d.length(1), t = u(rng);
      const FrameSample fr = evaluate_frame(*ch, x, y, t);
      EXPECT_NEAR(fr.a[2].norm(), 1.0, 1e-12);
      EXPECT_NEAR(fr.a[2].dot(fr.a[0]), 0.0, 1e-12);
      EXPECT_NEAR(fr.a[2].dot(fr.a[1]), 0.0, 1e-12);
      for (int l = 0; l < 2; ++l) EXPECT_NEAR(fr.a[2].dot(fr.da[2][l]), 0.0, 1e-12);
      const FundamentalForms f = fundamental_forms(fr);
      EXPECT_NEAR(f.A0, fr.a[0].cross(fr.a[1]).squaredNorm(), 1e-12 * f.A0);
      // both expressions of f, Weingarten relations
      EXPECT_NEAR(f.f, fr.a[2].dot(fr.da[1][0]), 1e-12);
      EXPECT_NEAR(f.e, -fr.a[0].dot(fr.da[2][0]), 1e-12);
      EXPECT_NEAR(f.f, -fr.a[0].dot(fr.da[2][1]), 1e-12);
      EXPECT_NEAR(f.f, -fr.a[1].dot(fr.da[2][0]), 1e-12);
      EXPECT_NEAR(f.g, -fr.a[1].dot(fr.da[2][1]), 1e-12);
      const double A1dot = f.G * fr.a[0].dot(fr.da[2][0]) + f.E * fr.a[1].dot(fr.da[2][1]) -
                           f.F * (fr.a[0].dot(fr.da[2][1]) + fr.a[1].dot(fr.da[2][0]));
      EXPECT_NEAR(f.A1, A1dot, 1e-12);
    }
  }
}

TEST(Frame, DegenerateChartIsRejected) {
  SphereCapChart s(1.0, Rect{{0.0, 0.0}, {1.0, 1.0}});
  EXPECT_THROW(evaluate_frame(s, 0.0, 0.5, 0.0), DegenerateChart);
}

TEST(ValidateChart, AnalyticChartsPass) {
  PlaneChart p(0.1, 0.2, 0.3);
  const auto rp = validate_chart(p, 20);
  EXPECT_TRUE(rp.pass());
  for (const auto& c : rp.checks) EXPECT_LT(c.max_rel_dev, 1e-10) << c.entry;
  for (ChartPtr ch : {ChartPtr(std::make_shared<CylinderChart>(1.0)), ChartPtr(std::make_shared<WavyPlaneChart>(0.1, 1.0, 2.0)),
                      ChartPtr(std::make_shared<SphereCapChart>(1.0, Rect{{0.4, 0.0}, {2.7, 6.0}}))}) {
    const auto r = validate_chart(*ch, 20);
    for (const auto& c : r.checks) EXPECT_LT(c.max_rel_dev, 1e-6) << ch->name() << " " << c.entry;
  }
}

TEST(ValidateChart, FlagsWrongSecondDerivative) {
  WrongCurvatureCylinder c;
  const auto r = validate_chart(c, 10);
  EXPECT_FALSE(r.pass());
  bool flagged = false;
  for (const auto& chk : r.checks)
    if (!chk.pass) flagged = flagged || chk.entry.find("d2") != std::string::npos || chk.entry.find("d3") != std::string::npos;
  EXPECT_TRUE(flagged);
}

TEST(ChartRegistry, NamesAndUnknown) {
  for (const auto& n : chart_names()) {
    if (n == "user-spline") continue;
    EXPECT_NO_THROW(make_chart(n, {}, Rect{{0.2, 0.2}, {1.0, 1.0}})) << n;
  }
  EXPECT_THROW(make_chart("torus", {}, Rect{}), UnknownRegistryName);
}

TEST(SplineChart, ReproducesSmoothSurface) {
  std::vector<double> x, y;
  for (int i = 0; i <= 20; ++i) x.push_back(i / 20.0);
  for (int j = 0; j <= 16; ++j) y.push_back(j / 16.0);
  std::vector<Vec3> pts;
  for (double xx : x)
    for (double yy : y) pts.emplace_back(xx, yy, 0.1 * std::sin(xx) * std::cos(yy));
  SplineChart s(x, y, pts);
  const ChartJet j = s.evaluate(0.43, 0.61, 0.0);
  EXPECT_NEAR(j.X.z(), 0.1 * std::sin(0.43) * std::cos(0.61), 1e-6);
  EXPECT_NEAR(j.d1[0].z(), 0.1 * std::cos(0.43) * std::cos(0.61), 1e-4);
  EXPECT_NEAR(j.d1[0].x(), 1.0, 1e-12);
}

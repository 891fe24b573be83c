#include "gapflow/geometry.hpp"

#include "gapflow/errors.hpp"
#include "gapflow/taylor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace gapflow {

ChartJet::ChartJet() {
  for (int l = 0; l < 2; ++l) {
    d1[l].setZero();
    dt1[l].setZero();
    for (int m = 0; m < 2; ++m) {
      d2[l][m].setZero();
      for (int n = 0; n < 2; ++n) d3[l][m][n].setZero();
    }
  }
}

namespace {

Vec3 cross(const Vec3& a, const Vec3& b) { return a.cross(b); }

using TVec = std::array<Taylor2, 3>;

TVec tcross(const TVec& a, const TVec& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

TVec tangent_jet(const ChartJet& j, int k) {
  TVec r;
  for (int c = 0; c < 3; ++c) {
    r[c].v = j.d1[k][c];
    for (int m = 0; m < 2; ++m) {
      r[c].g[m] = j.d2[k][m][c];
      for (int n = 0; n < 2; ++n) r[c].h[m][n] = j.d3[k][m][n][c];
    }
  }
  return r;
}

}  // namespace

FrameSample evaluate_frame(const SurfaceChart& chart, double xi1, double xi2, double t, double floor) {
  const ChartJet j = chart.evaluate(xi1, xi2, t);
  FrameSample fr;
  const TVec a1 = tangent_jet(j, 0);
  const TVec a2 = tangent_jet(j, 1);
  const TVec c = tcross(a1, a2);
  const Taylor2 s2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
  if (!(s2.v >= floor)) {
    std::ostringstream os;
    os << "degenerate chart at (" << xi1 << ", " << xi2 << ", t=" << t << "): |a1 x a2|^2 = " << s2.v;
    throw DegenerateChart(os.str());
  }
  const Taylor2 inv = rsqrt(s2);
  fr.cross_norm2 = s2.v;
  for (int k = 0; k < 2; ++k) {
    fr.a[k] = j.d1[k];
    fr.dadt[k] = j.dt1[k];
    for (int l = 0; l < 2; ++l) {
      fr.da[k][l] = j.d2[k][l];
      for (int m = 0; m < 2; ++m) fr.d2a[k][l][m] = j.d3[k][l][m];
    }
  }
  for (int comp = 0; comp < 3; ++comp) {
    const Taylor2 n = c[comp] * inv;
    fr.a[2][comp] = n.v;
    for (int l = 0; l < 2; ++l) {
      fr.da[2][l][comp] = n.g[l];
      for (int m = 0; m < 2; ++m) fr.d2a[2][l][m][comp] = n.h[l][m];
    }
  }
  const Vec3 ct = cross(j.dt1[0], j.d1[1]) + cross(j.d1[0], j.dt1[1]);
  const double s = std::sqrt(s2.v);
  fr.dadt[2] = (ct - fr.a[2] * fr.a[2].dot(ct)) / s;
  fr.Xt = j.Xt;
  fr.Xtt = j.Xtt;
  fr.dXtdxi[0] = j.dt1[0];
  fr.dXtdxi[1] = j.dt1[1];
  return fr;
}

FundamentalForms fundamental_forms(const FrameSample& fr) {
  FundamentalForms f;
  f.E = fr.a[0].dot(fr.a[0]);
  f.F = fr.a[0].dot(fr.a[1]);
  f.G = fr.a[1].dot(fr.a[1]);
  f.e = fr.a[2].dot(fr.da[0][0]);
  f.f = fr.a[2].dot(fr.da[0][1]);
  f.g = fr.a[2].dot(fr.da[1][1]);
  f.A0 = f.E * f.G - f.F * f.F;
  if (!(f.A0 > 0.0)) throw DegenerateChart("EG - F^2 <= 0");
  f.A1 = -f.e * f.G - f.g * f.E + 2.0 * f.f * f.F;
  f.A2 = f.e * f.g - f.f * f.f;
  f.M << f.G, -f.F, -f.F, f.E;
  return f;
}

// ---------------------------------------------------------------- validation

bool ValidationReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const DerivativeCheck& c) { return c.pass; });
}

const DerivativeCheck* ValidationReport::find(const std::string& entry) const {
  for (const auto& c : checks)
    if (c.entry == entry) return &c;
  return nullptr;
}

ValidationReport validate_chart(const SurfaceChart& chart, int sample_count, double step, double tolerance,
                                unsigned long long seed) {
  ValidationReport rep;
  rep.step = step;
  rep.tolerance = tolerance;
  std::map<std::string, double> worst;
  auto record = [&](const std::string& key, const Vec3& exact, const Vec3& fd) {
    const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
    const double dev = (exact - fd).cwiseAbs().maxCoeff() / scale;
    double& w = worst[key];
    w = std::max(w, dev);
  };
  const Rect d = chart.domain();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const char* ax = "12";
  for (int s = 0; s < sample_count; ++s) {
    double xi[2];
    for (int a = 0; a < 2; ++a) {
      const double pad = 4.0 * step;
      xi[a] = d.lo[a] + pad + (d.length(a) - 2.0 * pad) * u01(rng);
    }
    const double t = u01(rng);
    const ChartJet j = chart.evaluate(xi[0], xi[1], t);
    for (int m = 0; m < 2; ++m) {
      double p[2] = {xi[0], xi[1]}, q[2] = {xi[0], xi[1]};
      p[m] += step;
      q[m] -= step;
      const ChartJet jp = chart.evaluate(p[0], p[1], t);
      const ChartJet jm = chart.evaluate(q[0], q[1], t);
      const double inv = 0.5 / step;
      record(std::string("d1[") + ax[m] + "]", j.d1[m], (jp.X - jm.X) * inv);
      for (int l = 0; l < 2; ++l) {
        record(std::string("d2[") + ax[l] + ax[m] + "]", j.d2[l][m], (jp.d1[l] - jm.d1[l]) * inv);
        for (int k = 0; k < 2; ++k)
          record(std::string("d3[") + ax[k] + ax[l] + ax[m] + "]", j.d3[k][l][m],
                 (jp.d2[k][l] - jm.d2[k][l]) * inv);
      }
    }
    const ChartJet tp = chart.evaluate(xi[0], xi[1], t + step);
    const ChartJet tm = chart.evaluate(xi[0], xi[1], t - step);
    const double inv = 0.5 / step;
    record("Xt", j.Xt, (tp.X - tm.X) * inv);
    record("Xtt", j.Xtt, (tp.Xt - tm.Xt) * inv);
    for (int l = 0; l < 2; ++l)
      record(std::string("dt1[") + ax[l] + "]", j.dt1[l], (tp.d1[l] - tm.d1[l]) * inv);
  }
  for (const auto& [k, v] : worst) rep.checks.push_back({k, v, v < tolerance});
  return rep;
}

// ---------------------------------------------------------------- charts

PlaneChart::PlaneChart(double rx, double ry, double rz, Rect d) : d_(d) {
  R_ = (Eigen::AngleAxisd(rz, Vec3::UnitZ()) * Eigen::AngleAxisd(ry, Vec3::UnitY()) *
        Eigen::AngleAxisd(rx, Vec3::UnitX()))
           .toRotationMatrix();
}

ChartJet PlaneChart::evaluate(double xi1, double xi2, double) const {
  ChartJet j;
  j.X = R_ * Vec3(xi1, xi2, 0.0);
  j.d1[0] = R_.col(0);
  j.d1[1] = R_.col(1);
  return j;
}

ChartJet TranslatingPlaneChart::evaluate(double xi1, double xi2, double t) const {
  ChartJet j;
  j.X = Vec3(xi1, xi2, c_ * t);
  j.d1[0] = Vec3::UnitX();
  j.d1[1] = Vec3::UnitY();
  j.Xt = Vec3(0.0, 0.0, c_);
  return j;
}

CylinderChart::CylinderChart(double radius, Rect d) : R_(radius), d_(d) {}

ChartJet CylinderChart::evaluate(double xi1, double xi2, double) const {
  const double c = std::cos(xi1), s = std::sin(xi1);
  ChartJet j;
  j.X = Vec3(R_ * c, R_ * s, xi2);
  j.d1[0] = Vec3(-R_ * s, R_ * c, 0.0);
  j.d1[1] = Vec3::UnitZ();
  j.d2[0][0] = Vec3(-R_ * c, -R_ * s, 0.0);
  j.d3[0][0][0] = Vec3(R_ * s, -R_ * c, 0.0);
  return j;
}

SphereCapChart::SphereCapChart(double radius, Rect d) : R_(radius), d_(d) {}

namespace {
// k-th derivative of sin and cos
double dsin(int k, double x) {
  switch (k & 3) {
    case 0: return std::sin(x);
    case 1: return std::cos(x);
    case 2: return -std::sin(x);
    default: return -std::cos(x);
  }
}
double dcos(int k, double x) { return dsin(k + 1, x); }
}  // namespace

ChartJet SphereCapChart::evaluate(double th, double ph, double) const {
  auto D = [&](int a, int b) {
    return Vec3(R_ * dsin(a, th) * dcos(b, ph), R_ * dsin(a, th) * dsin(b, ph), b == 0 ? R_ * dcos(a, th) : 0.0);
  };
  ChartJet j;
  j.X = D(0, 0);
  for (int l = 0; l < 2; ++l) {
    j.d1[l] = D(l == 0, l == 1);
    for (int m = 0; m < 2; ++m) {
      j.d2[l][m] = D((l == 0) + (m == 0), (l == 1) + (m == 1));
      for (int n = 0; n < 2; ++n)
        j.d3[l][m][n] = D((l == 0) + (m == 0) + (n == 0), (l == 1) + (m == 1) + (n == 1));
    }
  }
  return j;
}

WavyPlaneChart::WavyPlaneChart(double amp, double wavelength, double omega, Rect d)
    : amp_(amp), k_(2.0 * M_PI / wavelength), omega_(omega), d_(d) {}

ChartJet WavyPlaneChart::evaluate(double xi1, double xi2, double t) const {
  const double s = std::sin(k_ * xi1), c = std::cos(k_ * xi1);
  const double ct = std::cos(omega_ * t), st = std::sin(omega_ * t);
  ChartJet j;
  j.X = Vec3(xi1, xi2, amp_ * s * ct);
  j.d1[0] = Vec3(1.0, 0.0, amp_ * k_ * c * ct);
  j.d1[1] = Vec3::UnitY();
  j.d2[0][0] = Vec3(0.0, 0.0, -amp_ * k_ * k_ * s * ct);
  j.d3[0][0][0] = Vec3(0.0, 0.0, -amp_ * k_ * k_ * k_ * c * ct);
  j.Xt = Vec3(0.0, 0.0, -amp_ * omega_ * s * st);
  j.Xtt = Vec3(0.0, 0.0, -amp_ * omega_ * omega_ * s * ct);
  j.dt1[0] = Vec3(0.0, 0.0, -amp_ * k_ * omega_ * c * st);
  return j;
}

// ---------------------------------------------------------------- spline chart

namespace {

// Not-a-knot cubic spline on fixed knots: second derivatives M = W y.
struct Spline1D {
  std::vector<double> x;
  Eigen::MatrixXd W;

  explicit Spline1D(std::vector<double> knots) : x(std::move(knots)) {
    const int n = static_cast<int>(x.size());
    if (n < 4) throw Error("spline chart needs at least 4 knots per axis");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n), R = Eigen::MatrixXd::Zero(n, n);
    auto h = [&](int i) { return x[i + 1] - x[i]; };
    for (int i = 1; i < n - 1; ++i) {
      A(i, i - 1) = h(i - 1);
      A(i, i) = 2.0 * (h(i - 1) + h(i));
      A(i, i + 1) = h(i);
      R(i, i + 1) += 6.0 / h(i);
      R(i, i) -= 6.0 / h(i) + 6.0 / h(i - 1);
      R(i, i - 1) += 6.0 / h(i - 1);
    }
    A(0, 0) = h(1);
    A(0, 1) = -(h(0) + h(1));
    A(0, 2) = h(0);
    A(n - 1, n - 3) = h(n - 2);
    A(n - 1, n - 2) = -(h(n - 3) + h(n - 2));
    A(n - 1, n - 1) = h(n - 3);
    W = A.fullPivLu().solve(R);
  }

  // Weights of the derivatives of order 0..3 at point s.
  void weights(double s, Eigen::VectorXd w[4]) const {
    const int n = static_cast<int>(x.size());
    int j = static_cast<int>(std::upper_bound(x.begin(), x.end(), s) - x.begin()) - 1;
    j = std::clamp(j, 0, n - 2);
    const double h = x[j + 1] - x[j];
    const double t = s - x[j];
    const Eigen::VectorXd Mj = W.row(j).transpose(), Mk = W.row(j + 1).transpose();
    Eigen::VectorXd ej = Eigen::VectorXd::Zero(n), ek = Eigen::VectorXd::Zero(n);
    ej[j] = 1.0;
    ek[j + 1] = 1.0;
    const Eigen::VectorXd b = (ek - ej) / h - h * (2.0 * Mj + Mk) / 6.0;
    const Eigen::VectorXd c3 = (Mk - Mj) / (6.0 * h);
    w[0] = ej + t * b + 0.5 * t * t * Mj + t * t * t * c3;
    w[1] = b + t * Mj + 3.0 * t * t * c3;
    w[2] = Mj + 6.0 * t * c3;
    w[3] = 6.0 * c3;
  }
};

}  // namespace

struct SplineChart::Impl {
  Spline1D s1, s2;
  Eigen::MatrixXd P[3];  // P[c](i, j) = component c at (xi1_i, xi2_j)
  Impl(std::vector<double> x1, std::vector<double> x2) : s1(std::move(x1)), s2(std::move(x2)) {}
};

SplineChart::SplineChart(std::vector<double> xi1, std::vector<double> xi2, std::vector<Vec3> points) {
  const auto n1 = xi1.size(), n2 = xi2.size();
  if (points.size() != n1 * n2) throw Error("spline chart: point count does not match grid");
  auto impl = std::make_shared<Impl>(std::move(xi1), std::move(xi2));
  for (int c = 0; c < 3; ++c) {
    impl->P[c].resize(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n2));
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        impl->P[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i * n2 + j][c];
  }
  impl_ = impl;
}

SplineChart SplineChart::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spline chart file: " + path);
  std::size_t n1 = 0, n2 = 0;
  if (!(in >> n1 >> n2) || n1 < 4 || n2 < 4) throw IoError("bad spline chart header in " + path);
  struct Row {
    double a, b;
    Vec3 p;
  };
  std::vector<Row> rows;
  for (std::size_t r = 0; r < n1 * n2; ++r) {
    Row row;
    if (!(in >> row.a >> row.b >> row.p[0] >> row.p[1] >> row.p[2]))
      throw IoError("spline chart file truncated: " + path);
    rows.push_back(row);
  }
  std::vector<double> x1, x2;
  for (const auto& r : rows) {
    x1.push_back(r.a);
    x2.push_back(r.b);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(x1);
  uniq(x2);
  if (x1.size() != n1 || x2.size() != n2) throw IoError("spline chart points do not form an n1 x n2 grid");
  std::vector<Vec3> pts(n1 * n2, Vec3::Zero());
  for (const auto& r : rows) {
    const auto i = static_cast<std::size_t>(std::lower_bound(x1.begin(), x1.end(), r.a) - x1.begin());
    const auto j = static_cast<std::size_t>(std::lower_bound(x2.begin(), x2.end(), r.b) - x2.begin());
    pts[i * n2 + j] = r.p;
  }
  return SplineChart(std::move(x1), std::move(x2), std::move(pts));
}

Rect SplineChart::domain() const {
  Rect d;
  d.lo[0] = impl_->s1.x.front();
  d.hi[0] = impl_->s1.x.back();
  d.lo[1] = impl_->s2.x.front();
  d.hi[1] = impl_->s2.x.back();
  return d;
}

ChartJet SplineChart::evaluate(double xi1, double xi2, double) const {
  Eigen::VectorXd w1[4], w2[4];
  impl_->s1.weights(xi1, w1);
  impl_->s2.weights(xi2, w2);
  auto D = [&](int a, int b) {
    Vec3 r;
    for (int c = 0; c < 3; ++c) r[c] = w1[a].dot(impl_->P[c] * w2[b]);
    return r;
  };
  ChartJet j;
  j.X = D(0, 0);
  for (int l = 0; l < 2; ++l) {
    j.d1[l] = D(l == 0, l == 1);
    for (int m = 0; m < 2; ++m) {
      j.d2[l][m] = D((l == 0) + (m == 0), (l == 1) + (m == 1));
      for (int n = 0; n < 2; ++n)
        j.d3[l][m][n] = D((l == 0) + (m == 0) + (n == 0), (l == 1) + (m == 1) + (n == 1));
    }
  }
  return j;
}

// ---------------------------------------------------------------- registry

std::vector<std::string> chart_names() {
  return {"plane", "translating-plane", "cylinder", "sphere-cap", "wavy-plane", "user-spline"};
}

ChartPtr make_chart(const std::string& name, const ChartParams& p, const Rect& d, const std::string& spline_file) {
  auto get = [&](const char* k, double def) {
    auto it = p.find(k);
    return it == p.end() ? def : it->second;
  };
  if (name == "plane") return std::make_shared<PlaneChart>(get("rx", 0), get("ry", 0), get("rz", 0), d);
  if (name == "translating-plane") return std::make_shared<TranslatingPlaneChart>(get("c", 0.0), d);
  if (name == "cylinder") return std::make_shared<CylinderChart>(get("radius", 1.0), d);
  if (name == "sphere-cap") return std::make_shared<SphereCapChart>(get("radius", 1.0), d);
  if (name == "wavy-plane")
    return std::make_shared<WavyPlaneChart>(get("amp", 0.1), get("wavelength", 1.0), get("omega", 0.0), d);
  if (name == "user-spline") {
    if (spline_file.empty()) throw UnknownRegistryName("user-spline chart requires chart.file");
    return std::make_shared<SplineChart>(SplineChart::from_file(spline_file));
  }
  throw UnknownRegistryName("unknown chart '" + name + "'");
}

}  // namespace gapflow

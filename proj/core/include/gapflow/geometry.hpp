#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gapflow {

using Vec3 = Eigen::Vector3d;

struct Rect {
  double lo[2] = {0.0, 0.0};
  double hi[2] = {1.0, 1.0};
  double length(int axis) const { return hi[axis] - lo[axis]; }
};

enum class ChartKind { analytic, tabulated_spline };

// Derivatives of X(xi1, xi2, t). Indices are 0-based: d1[l] = dX/dxi_{l+1}.
struct ChartJet {
  Vec3 X = Vec3::Zero();
  Vec3 d1[2];
  Vec3 d2[2][2];
  Vec3 d3[2][2][2];
  Vec3 Xt = Vec3::Zero();
  Vec3 Xtt = Vec3::Zero();
  Vec3 dt1[2];  // d2X / dt dxi_l

  ChartJet();
};

class SurfaceChart {
 public:
  virtual ~SurfaceChart() = default;
  virtual ChartJet evaluate(double xi1, double xi2, double t) const = 0;
  virtual Rect domain() const = 0;
  virtual std::string name() const = 0;
  virtual ChartKind kind() const { return ChartKind::analytic; }
};

using ChartPtr = std::shared_ptr<const SurfaceChart>;

// a[k] is a_{k+1}; da[k][l] = d a_k / d xi_l; d2a[k][l][m]; dadt[k] = d a_k / dt.
struct FrameSample {
  Vec3 a[3];
  Vec3 da[3][2];
  Vec3 d2a[3][2][2];
  Vec3 dadt[3];
  Vec3 Xt;
  Vec3 Xtt;
  Vec3 dXtdxi[2];
  double cross_norm2 = 0.0;  // |a1 x a2|^2

  // d/dxi_l (dX/dt . a3), analytic.
  double dnormal_speed(int l) const { return dXtdxi[l].dot(a[2]) + Xt.dot(da[2][l]); }
  double normal_speed() const { return Xt.dot(a[2]); }
};

struct FundamentalForms {
  double E = 0, F = 0, G = 0;
  double e = 0, f = 0, g = 0;
  double A0 = 0, A1 = 0, A2 = 0;
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
};

inline constexpr double kDefaultDegenerateFloor = 1e-14;

FrameSample evaluate_frame(const SurfaceChart& chart, double xi1, double xi2, double t,
                           double floor = kDefaultDegenerateFloor);

FundamentalForms fundamental_forms(const FrameSample& frame);

struct DerivativeCheck {
  std::string entry;
  double max_rel_dev = 0.0;
  bool pass = true;
};

struct ValidationReport {
  std::vector<DerivativeCheck> checks;
  double tolerance = 1e-6;
  double step = 1e-5;
  bool pass() const;
  const DerivativeCheck* find(const std::string& entry) const;
};

ValidationReport validate_chart(const SurfaceChart& chart, int sample_count, double step = 1e-5,
                                double tolerance = 1e-6, unsigned long long seed = 12345);

// Charts.

class PlaneChart : public SurfaceChart {
 public:
  // X = R (xi1, xi2, 0) + origin, R from Euler angles about x, y, z (radians).
  explicit PlaneChart(double rx = 0.0, double ry = 0.0, double rz = 0.0, Rect d = {});
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override { return d_; }
  std::string name() const override { return "plane"; }
  const Eigen::Matrix3d& rotation() const { return R_; }

 private:
  Eigen::Matrix3d R_;
  Rect d_;
};

class TranslatingPlaneChart : public SurfaceChart {
 public:
  explicit TranslatingPlaneChart(double c, Rect d = {}) : c_(c), d_(d) {}
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override { return d_; }
  std::string name() const override { return "translating-plane"; }

 private:
  double c_;
  Rect d_;
};

class CylinderChart : public SurfaceChart {
 public:
  explicit CylinderChart(double radius = 1.0, Rect d = {});
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override { return d_; }
  std::string name() const override { return "cylinder"; }

 private:
  double R_;
  Rect d_;
};

// (theta, phi) chart of a sphere of radius R, theta kept away from the poles.
class SphereCapChart : public SurfaceChart {
 public:
  explicit SphereCapChart(double radius = 1.0, Rect d = {});
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override { return d_; }
  std::string name() const override { return "sphere-cap"; }

 private:
  double R_;
  Rect d_;
};

// X = (xi1, xi2, amp sin(k xi1) cos(omega t)), k = 2 pi / wavelength.
class WavyPlaneChart : public SurfaceChart {
 public:
  WavyPlaneChart(double amp, double wavelength, double omega, Rect d = {});
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override { return d_; }
  std::string name() const override { return "wavy-plane"; }

 private:
  double amp_, k_, omega_;
  Rect d_;
};

// Static tensor-product not-a-knot cubic spline through tabulated points.
// Third derivatives are piecewise constant.
class SplineChart : public SurfaceChart {
 public:
  SplineChart(std::vector<double> xi1, std::vector<double> xi2, std::vector<Vec3> points);
  static SplineChart from_file(const std::string& path);
  ChartJet evaluate(double xi1, double xi2, double t) const override;
  Rect domain() const override;
  std::string name() const override { return "user-spline"; }
  ChartKind kind() const override { return ChartKind::tabulated_spline; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

using ChartParams = std::map<std::string, double>;

// Registry: plane, translating-plane, cylinder, sphere-cap, wavy-plane, user-spline.
ChartPtr make_chart(const std::string& name, const ChartParams& params, const Rect& domain,
                    const std::string& spline_file = "");
std::vector<std::string> chart_names();

}  // namespace gapflow

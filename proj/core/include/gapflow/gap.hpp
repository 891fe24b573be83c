#pragma once

#include <map>
#include <string>
#include <vector>

namespace gapflow {

struct GapSample {
  double h = 1.0;
  double dh[2] = {0.0, 0.0};
  double d2h[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double ht = 0.0;
  double dht[2] = {0.0, 0.0};  // d2h / dt dxi_l
};

// Registered analytic gap families:
//   constant        h = value
//   linear-slider   h = ha + (hb - ha) (xi1 - x0) / (x1 - x0)
//   cosine          h = value + amp cos(2 pi xi1 / wavelength)
//   gaussian-bump   h = value - amp exp(-|xi - c|^2 / width^2)
//   squeeze-linear  h = value - rate t
//   squeeze-exp     h = value exp(-rate t)
//   wave-consistent h = value exp(-a k cos(k xi1) t), k = 2 pi / wavelength
class GapField {
 public:
  GapField() = default;
  GapField(std::string family, std::map<std::string, double> params, double eps, double floor, double x0 = 0.0,
           double x1 = 1.0);

  GapSample eval(double xi1, double xi2, double t) const;

  const std::string& family() const { return family_; }
  const std::map<std::string, double>& params() const { return params_; }
  double eps() const { return eps_; }
  double floor() const { return floor_; }
  void set_eps(double e);

 private:
  double p(const char* key, double def) const;
  std::string family_ = "constant";
  std::map<std::string, double> params_;
  double eps_ = 0.1;
  double floor_ = 1e-3;
  double x0_ = 0.0, x1_ = 1.0;
};

std::vector<std::string> gap_families();

}  // namespace gapflow

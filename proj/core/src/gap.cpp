#include "gapflow/gap.hpp"

#include "gapflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gapflow {

std::vector<std::string> gap_families() {
  return {"constant", "linear-slider", "cosine", "gaussian-bump", "squeeze-linear", "squeeze-exp", "wave-consistent"};
}

GapField::GapField(std::string family, std::map<std::string, double> params, double eps, double floor, double x0,
                   double x1)
    : family_(std::move(family)), params_(std::move(params)), eps_(eps), floor_(floor), x0_(x0), x1_(x1) {
  const auto fams = gap_families();
  if (std::find(fams.begin(), fams.end(), family_) == fams.end())
    throw UnknownRegistryName("unknown gap family '" + family_ + "'");
  if (!(floor_ > 0.0)) throw Error("gap floor h0 must be positive");
  set_eps(eps);
}

void GapField::set_eps(double e) {
  if (!(e > 0.0)) throw Error("gap parameter eps must be positive");
  if (e * floor_ < 1e-12) throw Error("eps * h0 below 1e-12");
  eps_ = e;
}

double GapField::p(const char* key, double def) const {
  auto it = params_.find(key);
  return it == params_.end() ? def : it->second;
}

GapSample GapField::eval(double xi1, double xi2, double t) const {
  GapSample s;
  const double v = p("value", 1.0);
  if (family_ == "constant") {
    s.h = v;
  } else if (family_ == "linear-slider") {
    const double ha = p("ha", 2.0), hb = p("hb", 1.0);
    const double slope = (hb - ha) / (x1_ - x0_);
    s.h = ha + slope * (xi1 - x0_);
    s.dh[0] = slope;
  } else if (family_ == "cosine") {
    const double amp = p("amp", 0.5), k = 2.0 * M_PI / p("wavelength", 1.0);
    s.h = v + amp * std::cos(k * xi1);
    s.dh[0] = -amp * k * std::sin(k * xi1);
    s.d2h[0][0] = -amp * k * k * std::cos(k * xi1);
  } else if (family_ == "gaussian-bump") {
    const double amp = p("amp", 0.5), w = p("width", 0.2), c1 = p("c1", 0.5), c2 = p("c2", 0.5);
    const double dx = xi1 - c1, dy = xi2 - c2;
    const double g = std::exp(-(dx * dx + dy * dy) / (w * w));
    const double gx = -2.0 * dx / (w * w) * g, gy = -2.0 * dy / (w * w) * g;
    s.h = v - amp * g;
    s.dh[0] = -amp * gx;
    s.dh[1] = -amp * gy;
    s.d2h[0][0] = -amp * (-2.0 / (w * w) * g - 2.0 * dx / (w * w) * gx);
    s.d2h[1][1] = -amp * (-2.0 / (w * w) * g - 2.0 * dy / (w * w) * gy);
    s.d2h[0][1] = s.d2h[1][0] = -amp * (-2.0 * dx / (w * w) * gy);
  } else if (family_ == "squeeze-linear") {
    const double rate = p("rate", 1.0);
    s.h = v - rate * t;
    s.ht = -rate;
  } else if (family_ == "squeeze-exp") {
    const double rate = p("rate", 1.0);
    s.h = v * std::exp(-rate * t);
    s.ht = -rate * s.h;
  } else if (family_ == "wave-consistent") {
    const double a = p("a", 0.1), k = 2.0 * M_PI / p("wavelength", 1.0);
    const double c = std::cos(k * xi1), sn = std::sin(k * xi1);
    const double e = -a * k * c * t;  // exponent
    const double ex = a * k * k * sn * t, exx = a * k * k * k * c * t;
    s.h = v * std::exp(e);
    s.dh[0] = s.h * ex;
    s.d2h[0][0] = s.h * (ex * ex + exx);
    const double et = -a * k * c, ext = a * k * k * sn;
    s.ht = s.h * et;
    s.dht[0] = s.h * (ex * et + ext);
  }
  if (!(s.h >= floor_)) {
    std::ostringstream os;
    os << "gap h = " << s.h << " below floor " << floor_ << " at (" << xi1 << ", " << xi2 << ", t=" << t << ")";
    throw Error(os.str());
  }
  return s;
}

}  // namespace gapflow

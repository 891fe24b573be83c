#include "gapflow/grid.hpp"

#include "gapflow/errors.hpp"

#include <algorithm>

namespace gapflow {

std::vector<std::vector<double>> fd_weights(double z, const std::vector<double>& x, int m) {
  const int n = static_cast<int>(x.size());
  std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

Differentiator::Differentiator(const Grid& g, int order) : g_(g), order_(order) {
  if (order != 2 && order != 4) throw Error("stencil order must be 2 or 4");
  for (int a = 0; a < 2; ++a) {
    const int N = g.nodes(a);
    const double h = g.dx(a);
    if (N < order + 2) throw Error("grid too small for the stencil order");
    for (int deriv = 1; deriv <= 2; ++deriv) {
      const int central = order / 2;  // radius of the central stencil
      const int one_sided = deriv + order;
      st_[a][deriv - 1].resize(N);
      for (int i = 0; i < N; ++i) {
        std::vector<int> offs;
        if (g.periodic[a] || (i - central >= 0 && i + central <= N - 1)) {
          for (int o = -central; o <= central; ++o) offs.push_back(o);
        } else {
          int lo = i < N / 2 ? -i : (N - 1 - i) - (one_sided - 1);
          for (int o = 0; o < one_sided; ++o) offs.push_back(lo + o);
        }
        std::vector<double> x;
        for (int o : offs) x.push_back(static_cast<double>(o));
        const auto w = fd_weights(0.0, x, deriv);
        Stencil1D s;
        s.count = static_cast<int>(offs.size());
        const double scale = deriv == 1 ? 1.0 / h : 1.0 / (h * h);
        for (int k = 0; k < s.count; ++k) {
          s.off[k] = offs[k];
          s.w[k] = w[deriv][k] * scale;
        }
        st_[a][deriv - 1][i] = s;
      }
    }
  }
}

int Differentiator::wrap(int axis, int i) const {
  const int N = g_.nodes(axis);
  if (g_.periodic[axis]) return ((i % N) + N) % N;
  return i;
}

void Differentiator::weights(int node, Comp c, std::vector<WeightedNode>& out) const {
  out.clear();
  const int i = g_.ix(node), j = g_.jx(node);
  auto along = [&](int axis, int deriv) {
    const int p = axis == 0 ? i : j;
    const Stencil1D& s = st_[axis][deriv - 1][p];
    for (int k = 0; k < s.count; ++k) {
      const int q = wrap(axis, p + s.off[k]);
      out.push_back({axis == 0 ? g_.index(q, j) : g_.index(i, q), s.w[k]});
    }
  };
  switch (c) {
    case kVal: out.push_back({node, 1.0}); break;
    case kD1: along(0, 1); break;
    case kD2: along(1, 1); break;
    case kD11: along(0, 2); break;
    case kD22: along(1, 2); break;
    case kD12: {
      const Stencil1D& s1 = st_[0][0][i];
      const Stencil1D& s2 = st_[1][0][j];
      for (int a = 0; a < s1.count; ++a)
        for (int b = 0; b < s2.count; ++b)
          out.push_back({g_.index(wrap(0, i + s1.off[a]), wrap(1, j + s2.off[b])), s1.w[a] * s2.w[b]});
      break;
    }
  }
}

double Differentiator::d(const std::vector<double>& f, int node, Comp c) const {
  const int i = g_.ix(node), j = g_.jx(node);
  double r = 0.0;
  switch (c) {
    case kVal: return f[node];
    case kD1:
    case kD11: {
      const Stencil1D& s = st_[0][c == kD1 ? 0 : 1][i];
      for (int k = 0; k < s.count; ++k) r += s.w[k] * f[g_.index(wrap(0, i + s.off[k]), j)];
      return r;
    }
    case kD2:
    case kD22: {
      const Stencil1D& s = st_[1][c == kD2 ? 0 : 1][j];
      for (int k = 0; k < s.count; ++k) r += s.w[k] * f[g_.index(i, wrap(1, j + s.off[k]))];
      return r;
    }
    case kD12: {
      const Stencil1D& s1 = st_[0][0][i];
      const Stencil1D& s2 = st_[1][0][j];
      for (int a = 0; a < s1.count; ++a) {
        double col = 0.0;
        for (int b = 0; b < s2.count; ++b) col += s2.w[b] * f[g_.index(wrap(0, i + s1.off[a]), wrap(1, j + s2.off[b]))];
        r += s1.w[a] * col;
      }
      return r;
    }
  }
  return r;
}

Jet6 Differentiator::jet(const std::vector<double>& f, int node) const {
  Jet6 j;
  for (int c = 0; c < 6; ++c) j.c[c] = d(f, node, static_cast<Comp>(c));
  return j;
}

}  // namespace gapflow

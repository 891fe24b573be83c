#include "gapflow/coefficients.hpp"

#include "gapflow/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

namespace gapflow {

namespace {

using D2 = Dual<2>;

D2 jet(double v, double d0, double d1) {
  D2 x(v);
  x.d[0] = d0;
  x.d[1] = d1;
  return x;
}

double ipow(double x, int n) {
  if (n < 0) return 1.0 / ipow(x, -n);
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

}  // namespace

AlphaBetaSeries alpha_beta(const FundamentalForms& f, const double grad_h[2], int n_trunc) {
  if (!(f.A0 > 0.0)) throw DegenerateChart("A0 <= 0 in alpha/beta series");
  if (n_trunc < 2 || n_trunc + 1 >= kSeries) throw Error("N_trunc must be 2 or 3");
  return alpha_beta_series<double>(f.E, f.F, f.G, f.e, f.f, f.g, grad_h[0], grad_h[1], n_trunc + 1);
}

CoefficientTable assemble_coefficients(const FrameSample& fr, const FundamentalForms& fo, const GapSample& gp,
                                       int n_trunc) {
  if (!(fo.A0 > 0.0)) throw DegenerateChart("A0 <= 0 in coefficient assembly");
  if (n_trunc < 2 || n_trunc + 1 >= kSeries) throw Error("N_trunc must be 2 or 3");
  CoefficientTable c;
  c.n_trunc = n_trunc;
  c.frame = fr;
  c.forms = fo;
  c.gap = gp;
  c.sqrtA0 = std::sqrt(fo.A0);
  c.w = fr.normal_speed();
  for (int l = 0; l < 2; ++l) c.dw[l] = fr.dnormal_speed(l);
  const Vec3* a = fr.a;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.adot[i][k] = a[i].dot(a[k]);
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < 3; ++k) c.a3da[l][k] = a[2].dot(fr.da[k][l]);

  const double h = gp.h;
  const double* hd = gp.dh;
  const int ord = n_trunc + 1;

  // alpha, beta and their xi-derivatives through the recursion
  D2 E = jet(fo.E, 2.0 * a[0].dot(fr.da[0][0]), 2.0 * a[0].dot(fr.da[0][1]));
  D2 F = jet(fo.F, fr.da[0][0].dot(a[1]) + a[0].dot(fr.da[1][0]), fr.da[0][1].dot(a[1]) + a[0].dot(fr.da[1][1]));
  D2 G = jet(fo.G, 2.0 * a[1].dot(fr.da[1][0]), 2.0 * a[1].dot(fr.da[1][1]));
  auto second = [&](int k, int l, double v) {
    return jet(v, fr.da[2][0].dot(fr.da[k][l]) + a[2].dot(fr.d2a[k][l][0]),
               fr.da[2][1].dot(fr.da[k][l]) + a[2].dot(fr.d2a[k][l][1]));
  };
  D2 e = second(0, 0, fo.e), f = second(0, 1, fo.f), g = second(1, 1, fo.g);
  D2 h1 = jet(hd[0], gp.d2h[0][0], gp.d2h[0][1]);
  D2 h2 = jet(hd[1], gp.d2h[1][0], gp.d2h[1][1]);
  const auto sd = alpha_beta_series<D2>(E, F, G, e, f, g, h1, h2, ord);
  for (int l = 0; l < 3; ++l)
    for (int n = 0; n <= ord; ++n) {
      c.alpha[l][n] = sd.alpha[l][n].v;
      c.beta[l][n] = sd.beta[l][n].v;
      for (int m = 0; m < 2; ++m) {
        c.dalpha[l][n][m] = sd.alpha[l][n].d[m];
        c.dbeta[l][n][m] = sd.beta[l][n].d[m];
      }
    }
  const auto& al = c.alpha;
  const auto& be = c.beta;

  const double a1Xt = a[0].dot(fr.Xt), a2Xt = a[1].dot(fr.Xt);
  const double a1a3t = a[0].dot(fr.dadt[2]), a2a3t = a[1].dot(fr.dadt[2]);

  for (int j = 0; j < kMom; ++j)
    for (int l = 0; l < 3; ++l)
      for (int k = 0; k < 3; ++k) c.B[j][l][k] = al[l][j] * c.adot[0][k] + be[l][j] * c.adot[1][k];

  for (int l = 0; l < 3; ++l) c.C0[l] = al[l][0] * a1Xt + be[l][0] * a2Xt;
  for (int i = 1; i < kMom; ++i)
    for (int l = 0; l < 3; ++l)
      c.Cij[i][l] = al[l][i] * a1Xt + be[l][i] * a2Xt + al[l][i - 1] * a1a3t + be[l][i - 1] * a2a3t;

  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k)
        c.D[j][i][k] = al[i][j] * a[2].dot(fr.da[k][0]) + be[i][j] * a[2].dot(fr.da[k][1]);

  for (int j = 0; j <= ord; ++j)
    for (int i = 0; i < 3; ++i)
      for (int l = 0; l < 2; ++l)
        for (int k = 0; k < 3; ++k)
          c.H[j][i][l][k] = al[i][j] * a[0].dot(fr.da[k][l]) + be[i][j] * a[1].dot(fr.da[k][l]);

  c.I = a[0].cross(fr.da[2][1]).dot(a[2]) + fr.da[2][0].cross(a[1]).dot(a[2]);

  for (int i = 0; i < kMom; ++i)
    for (int j = 0; j < kMom; ++j)
      for (int l = 0; l < 3; ++l)
        for (int m = 0; m < 3; ++m) c.J[i][j][l][m] = al[l][i] * c.B[j][m][0] + be[l][i] * c.B[j][m][1];

  for (int n = 0; n < kMom; ++n)
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m) {
        double s = 0.0;
        for (int q = 0; q <= n; ++q) s += c.J[q][n - q][l][m];
        c.iota[n][l][m] = ipow(h, n) * s;
      }

  for (int j = 0; j < kMom; ++j)
    for (int i = 0; i < kMom; ++i)
      for (int l = 0; l < 3; ++l) {
        double s = 0.0;
        for (int m = 0; m < 2; ++m)
          s += c.dalpha[l][j][m] * c.B[i][m][0] + c.dbeta[l][j][m] * c.B[i][m][1] + al[l][j] * c.H[i][m][m][0] +
               be[l][j] * c.H[i][m][m][1];
        c.K[j][i][l] = s;
      }

  const auto& J = c.J;
  const auto& K = c.K;
  const auto& H = c.H;

  for (int n = 0; n < kMom; ++n)
    for (int r = 0; r <= n; ++r) {
      const int q = n - r;
      const double hq = ipow(h, q), hq1 = ipow(h, q - 1);
      for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 2; ++l) {
            double t1 = 0.0;
            for (int m = 0; m < 2; ++m) {
              double js = 0.0;
              for (int s = 0; s <= q; ++s) js += J[s][q - s][l][m] + J[s][q - s][m][l];
              t1 += H[0][i][m][k] * js;
            }
            double t2 = 0.0;
            if (i == k) {
              for (int s = 0; s <= q; ++s) {
                double hm = 0.0;
                for (int m = 0; m < 2; ++m) hm += hd[m] * J[s][q - s][l][m];
                t2 += h * K[s][q - s][l] + s * hm + 2.0 * r * J[s][q - s][2][l] + s * J[s][q - s][l][2];
              }
            }
            c.L[n][r][i][k][l] = hq * t1 + hq1 * t2;
          }
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 2; ++l) {
          double t1 = 0.0;
          for (int m = 0; m < 2; ++m) {
            double js = 0.0;
            for (int s = 0; s <= q; ++s) js += J[s][q - s][l][m] + J[s][q - s][m][l];
            t1 += c.a3da[m][k] * js;
          }
          double t2 = 0.0;
          if (k == 2) {
            for (int s = 0; s <= q; ++s) t1 += K[s][q - s][l];
            for (int s = 1; s <= q; ++s) {
              double hm = 0.0;
              for (int m = 0; m < 2; ++m) hm += hd[m] * J[s][q - s][l][m];
              t2 += s * hm + s * J[s][q - s][l][2];
            }
            for (int s = 0; s <= q; ++s) t2 += 2.0 * r * J[s][q - s][2][l];
          }
          c.L3[n][r][k][l] = hq * t1 + hq1 * t2;
        }
    }

  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 2; ++l) {
        double v = c.L[0][0][i][k][l];
        if (k < 2) v += hd[k] / h * J[0][0][i][l];
        if (i == k) v -= J[0][0][2][l] / h;
        c.Lbar[i][k][l] = v;
      }

  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      double v = al[i][0] * a[0].dot(fr.dadt[k]) + be[i][0] * a[1].dot(fr.dadt[k]);
      for (int l = 0; l < 2; ++l) v -= H[0][i][l][k] * c.C0[l];
      c.Q[i][k] = v;
    }
  for (int k = 0; k < 3; ++k) {
    double v = a[2].dot(fr.dadt[k]);
    for (int l = 0; l < 2; ++l) v -= c.a3da[l][k] * c.C0[l];
    c.Q[2][k] = v;
  }
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) c.R[i][k] = c.Q[i][k] + H[0][i][k][2] * c.w;

  for (int n = 0; n < kMom; ++n)
    for (int r = 0; r <= n; ++r) {
      const int q = n - r;
      const double hq = ipow(h, q), hq1 = ipow(h, q - 1);
      double hsum = 0.0;  // sum_m H^{q+1}_{mm3}
      if (q + 1 < kSeries)
        for (int m = 0; m < 2; ++m) hsum += H[q + 1][m][m][2];
      for (int i = 0; i < 2; ++i) {
        const Vec3 ai = a[0] * al[i][0] + a[1] * be[i][0];
        for (int k = 0; k < 3; ++k) {
          double v = 0.0;
          for (int s = 0; s <= q; ++s)
            for (int l = 0; l < 2; ++l) {
              double inner = 0.0, hm = 0.0;
              for (int m = 0; m < 2; ++m) {
                inner += fr.d2a[k][l][m].dot(ai) * J[s][q - s][l][m];
                hm += hd[m] * J[s][q - s][l][m];
              }
              v += hq * (inner + H[0][i][l][k] * K[s][q - s][l]) +
                   hq1 * H[0][i][l][k] * (2.0 * r * J[s][q - s][2][l] + s * hm + s * J[s][q - s][l][2]);
            }
          if (i == k && r > 0) {
            double t = 0.0;
            for (int s = 0; s <= q; ++s) {
              double hm = 0.0;
              for (int m = 0; m < 2; ++m) hm += hd[m] * J[s][q - s][2][m];
              t += hsum + K[s][q - s][2] / h + ((s - 1) * hm + (r + s) * J[s][q - s][2][2]) / (h * h);
            }
            v += r * hq * t;
          }
          c.S[n][r][i][k] = v;
        }
      }
      for (int k = 0; k < 3; ++k) {
        double v = 0.0;
        for (int s = 0; s <= q; ++s) {
          for (int m = 0; m < 2; ++m) {
            double inner = 0.0, hl = 0.0;
            for (int l = 0; l < 2; ++l) {
              inner += fr.d2a[k][l][m].dot(a[2]) * J[s][q - s][l][m];
              hl += hd[l] * J[s][q - s][m][l];
            }
            v += inner + c.a3da[m][k] * (2.0 * r / h * J[s][q - s][2][m] + K[s][q - s][m] +
                                          s / h * J[s][q - s][m][2] + s / h * hl);
          }
          if (k == 2) {
            double hm = 0.0;
            for (int m = 0; m < 2; ++m) hm += hd[m] * J[s][q - s][2][m];
            v += r / h * (K[s][q - s][2] + (r + s) / h * J[s][q - s][2][2] + (s - 1) / h * hm + h * hsum);
          }
        }
        c.S3[n][r][k] = hq * v;
      }
    }

  const Vec3 eta = hd[1] * a[0].cross(a[2]) + h * (a[0].cross(fr.da[2][1]) + fr.da[2][0].cross(a[1])) +
                   hd[0] * a[2].cross(a[1]);
  for (int i = 0; i < 3; ++i) c.eta[i] = eta[i];

  const double A1A0 = fo.A1 / fo.A0;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 3; ++k) {
      double v = c.S[0][0][i][k] + (c.I / c.sqrtA0 - A1A0) * c.D[0][i][k];
      for (int l = 0; l < 2; ++l) v -= J[0][0][2][l] * H[0][i][l][k] / h;
      for (int j = 0; j < 2; ++j) v -= J[0][0][i][j] * fr.da[k][j].dot(eta) / (h * c.sqrtA0);
      c.Sbar[i][k] = v;
    }

  for (int i = 0; i < 2; ++i) {
    double v = 0.0;
    for (int l = 0; l < 2; ++l) v += c.dw[l] * (c.L[0][0][i][2][l] - A1A0 * J[0][0][i][l]);
    v -= J[0][0][2][i] / (h * h) * gp.ht;
    for (int k = 0; k < 2; ++k) v -= 3.0 / h * J[0][0][k][i] * gp.dht[k];
    double br = c.S[0][0][i][2];
    for (int l = 0; l < 2; ++l) br -= J[0][0][2][l] * H[0][i][l][2] / h;
    for (int l = 0; l < 2; ++l) br -= J[0][0][l][i] * fr.da[2][l].dot(eta) / (h * c.sqrtA0);
    c.kappa[i] = v + c.w * br;
  }
  return c;
}

void apply_force_terms(CoefficientTable& c, const ForceTerms& ft) {
  if (!ft.have_friction) throw MissingBoundaryData("F / Fbar need friction force data");
  const double pre = ft.s0 / (ft.rho0 * c.gap.h);
  for (int i = 0; i < 2; ++i) {
    const Vec3 ai = c.frame.a[0] * c.alpha[i][0] + c.frame.a[1] * c.beta[i][0];
    c.F[i] = ft.f0_int[i] + pre * ft.fR_sum.dot(ai);
    double s = 0.0;
    for (int j = 0; j < 2; ++j) s += c.J[0][0][i][j] * ft.fR_sum.dot(c.frame.a[j]);
    c.Fbar[i] = pre * s + 0.5 * ft.f10[i] + ft.f00[i];
  }
}

CoefficientTable coefficients_at(const SurfaceChart& chart, const GapField& gap, double xi1, double xi2, double t,
                                 int n_trunc) {
  const FrameSample fr = evaluate_frame(chart, xi1, xi2, t);
  const FundamentalForms fo = fundamental_forms(fr);
  return assemble_coefficients(fr, fo, gap.eval(xi1, xi2, t), n_trunc);
}

int configured_threads() {
  const char* env = std::getenv("GAPFLOW_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

std::vector<CoefficientTable> table_over_grid(const SurfaceChart& chart, const GapField& gap, const Grid& grid,
                                              double t, int n_trunc, int threads) {
  const int N = grid.size();
  if (threads <= 0) threads = configured_threads();
  threads = std::max(1, std::min(threads, N));
  std::vector<CoefficientTable> out(N);
  std::vector<std::exception_ptr> err(threads);
  std::vector<int> err_node(threads, -1);
  auto work = [&](int w) {
    const int lo = static_cast<int>(static_cast<long long>(N) * w / threads);
    const int hi = static_cast<int>(static_cast<long long>(N) * (w + 1) / threads);
    for (int node = lo; node < hi; ++node) {
      try {
        out[node] = coefficients_at(chart, gap, grid.coord(0, grid.ix(node)), grid.coord(1, grid.jx(node)), t,
                                    n_trunc);
      } catch (...) {
        err[w] = std::current_exception();
        err_node[w] = node;
        return;
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (int w = 0; w < threads; ++w) {
    if (!err[w]) continue;
    const int node = err_node[w];
    std::ostringstream os;
    os << "node " << node << " (i=" << grid.ix(node) << ", j=" << grid.jx(node) << ", xi=(" << grid.coord(0, grid.ix(node))
       << ", " << grid.coord(1, grid.jx(node)) << ")): ";
    try {
      std::rethrow_exception(err[w]);
    } catch (const DegenerateChart& e) {
      throw DegenerateChart(os.str() + e.what());
    } catch (const std::exception& e) {
      throw Error(os.str() + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------------ dumping

std::vector<std::string> coefficient_families() {
  return {"forms", "alpha", "beta", "B", "C0", "Cij", "D", "H", "I", "J", "iota", "K",
          "L", "L3", "Lbar", "Q", "R", "S", "S3", "Sbar", "eta", "kappa"};
}

void coefficient_values(const CoefficientTable& c, const std::string& fam, std::vector<std::string>& labels,
                        std::vector<double>& values) {
  labels.clear();
  values.clear();
  auto put = [&](std::string name, std::initializer_list<int> idx, double v) {
    for (int i : idx) name += "_" + std::to_string(i);
    labels.push_back(std::move(name));
    values.push_back(v);
  };
  if (fam == "forms") {
    const auto& f = c.forms;
    const char* n[] = {"E", "F", "G", "e", "f", "g", "A0", "A1", "A2"};
    const double v[] = {f.E, f.F, f.G, f.e, f.f, f.g, f.A0, f.A1, f.A2};
    for (int i = 0; i < 9; ++i) put(n[i], {}, v[i]);
  } else if (fam == "alpha" || fam == "beta") {
    for (int l = 0; l < 3; ++l)
      for (int n = 0; n < kSeries; ++n) put(fam, {l + 1, n}, fam == "alpha" ? c.alpha[l][n] : c.beta[l][n]);
  } else if (fam == "B") {
    for (int j = 0; j < kMom; ++j)
      for (int l = 0; l < 3; ++l)
        for (int k = 0; k < 3; ++k) put("B", {j, l + 1, k + 1}, c.B[j][l][k]);
  } else if (fam == "C0") {
    for (int l = 0; l < 3; ++l) put("C0", {l + 1}, c.C0[l]);
  } else if (fam == "Cij") {
    for (int i = 1; i < kMom; ++i)
      for (int l = 0; l < 3; ++l) put("C", {i, i - 1, l + 1}, c.Cij[i][l]);
  } else if (fam == "D") {
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) put("D", {j, i + 1, k + 1}, c.D[j][i][k]);
  } else if (fam == "H") {
    for (int j = 0; j < kSeries; ++j)
      for (int i = 0; i < 3; ++i)
        for (int l = 0; l < 2; ++l)
          for (int k = 0; k < 3; ++k) put("H", {j, i + 1, l + 1, k + 1}, c.H[j][i][l][k]);
  } else if (fam == "I") {
    put("I", {}, c.I);
  } else if (fam == "J") {
    for (int i = 0; i < kMom; ++i)
      for (int j = 0; i + j < kMom; ++j)
        for (int l = 0; l < 3; ++l)
          for (int m = 0; m < 3; ++m) put("J", {i, j, l + 1, m + 1}, c.J[i][j][l][m]);
  } else if (fam == "iota") {
    for (int n = 0; n < kMom; ++n)
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m) put("iota", {n, l + 1, m + 1}, c.iota[n][l][m]);
  } else if (fam == "K") {
    for (int j = 0; j < kMom; ++j)
      for (int i = 0; i + j < kMom; ++i)
        for (int l = 0; l < 3; ++l) put("K", {j, i, l + 1}, c.K[j][i][l]);
  } else if (fam == "L") {
    for (int n = 0; n < kMom; ++n)
      for (int r = 0; r <= n; ++r)
        for (int i = 0; i < 2; ++i)
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 2; ++l) put("L", {n, r, i + 1, k + 1, l + 1}, c.L[n][r][i][k][l]);
  } else if (fam == "L3") {
    for (int n = 0; n < kMom; ++n)
      for (int r = 0; r <= n; ++r)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 2; ++l) put("L3", {n, r, k + 1, l + 1}, c.L3[n][r][k][l]);
  } else if (fam == "Lbar") {
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 2; ++l) put("Lbar", {i + 1, k + 1, l + 1}, c.Lbar[i][k][l]);
  } else if (fam == "Q") {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) put("Q", {i + 1, k + 1}, c.Q[i][k]);
  } else if (fam == "R") {
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) put("R", {i + 1, k + 1}, c.R[i][k]);
  } else if (fam == "S") {
    for (int n = 0; n < kMom; ++n)
      for (int r = 0; r <= n; ++r)
        for (int i = 0; i < 2; ++i)
          for (int k = 0; k < 3; ++k) put("S", {n, r, i + 1, k + 1}, c.S[n][r][i][k]);
  } else if (fam == "S3") {
    for (int n = 0; n < kMom; ++n)
      for (int r = 0; r <= n; ++r)
        for (int k = 0; k < 3; ++k) put("S3", {n, r, k + 1}, c.S3[n][r][k]);
  } else if (fam == "Sbar") {
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 3; ++k) put("Sbar", {i + 1, k + 1}, c.Sbar[i][k]);
  } else if (fam == "eta") {
    for (int i = 0; i < 3; ++i) put("eta", {i + 1}, c.eta[i]);
  } else if (fam == "kappa") {
    for (int i = 0; i < 2; ++i) put("kappa", {i + 1}, c.kappa[i]);
  } else {
    throw UnknownRegistryName("unknown coefficient family '" + fam + "'");
  }
}

}  // namespace gapflow

#pragma once

#include "gapflow/gap.hpp"
#include "gapflow/geometry.hpp"
#include "gapflow/grid.hpp"
#include "gapflow/taylor.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace gapflow {

// Orders 0..4 of the change-of-variable series are stored; the model needs
// superscripts up to 3, and H^{n-r+1} reaches 4.
inline constexpr int kSeries = 5;
inline constexpr int kMom = 4;  // polynomial moments 0..3

// alpha[l][n], beta[l][n]; l = 0, 1, 2 stand for indices 1, 2, 3.
// gamma_3 = 1 / (eps h), gamma_1 = gamma_2 = 0 is implicit.
template <class T>
struct AlphaBetaSeriesT {
  int order = 0;  // highest order held (N_trunc + 1)
  T alpha[3][kSeries];
  T beta[3][kSeries];
};

using AlphaBetaSeries = AlphaBetaSeriesT<double>;

// One step of the three-term recursion: -(x^{n-2} A2 + x^{n-1} A1) / A0.
template <class T>
T series_step(const T& prev2, const T& prev1, const T& A0, const T& A1, const T& A2) {
  return -(prev2 * A2 + prev1 * A1) / A0;
}

template <class T>
AlphaBetaSeriesT<T> alpha_beta_series(const T& E, const T& F, const T& G, const T& e, const T& f, const T& g,
                                      const T& h1, const T& h2, int order) {
  AlphaBetaSeriesT<T> s;
  s.order = order;
  for (int l = 0; l < 3; ++l)
    for (int n = 0; n < kSeries; ++n) s.alpha[l][n] = s.beta[l][n] = T(0.0);
  const T A0 = E * G - F * F;
  const T A1 = -e * G - g * E + 2.0 * f * F;
  const T A2 = e * g - f * f;
  s.alpha[0][0] = G / A0;
  s.alpha[1][0] = -F / A0;
  s.beta[1][0] = E / A0;
  s.alpha[0][1] = -(g + s.alpha[0][0] * A1) / A0;
  s.alpha[1][1] = (f - s.alpha[1][0] * A1) / A0;
  s.beta[1][1] = -(e + s.beta[1][0] * A1) / A0;
  for (int n = 2; n <= order; ++n) {
    s.alpha[0][n] = series_step(s.alpha[0][n - 2], s.alpha[0][n - 1], A0, A1, A2);
    s.alpha[1][n] = series_step(s.alpha[1][n - 2], s.alpha[1][n - 1], A0, A1, A2);
    s.beta[1][n] = series_step(s.beta[1][n - 2], s.beta[1][n - 1], A0, A1, A2);
  }
  for (int n = 0; n <= order; ++n) s.beta[0][n] = s.alpha[1][n];
  for (int n = 0; n <= std::min(order, 1); ++n) {
    s.alpha[2][n] = -s.alpha[0][n] * h1 - s.alpha[1][n] * h2;
    s.beta[2][n] = -s.beta[0][n] * h1 - s.beta[1][n] * h2;
  }
  for (int n = 2; n <= order; ++n) {
    s.alpha[2][n] = series_step(s.alpha[2][n - 2], s.alpha[2][n - 1], A0, A1, A2);
    s.beta[2][n] = series_step(s.beta[2][n - 2], s.beta[2][n - 1], A0, A1, A2);
  }
  return s;
}

// Series to order n_trunc + 1. Throws DegenerateChart if A0 <= 0.
AlphaBetaSeries alpha_beta(const FundamentalForms& forms, const double grad_h[2], int n_trunc);

// Coefficient families at one node. Indices are 0-based; an index value
// of 2 stands for the normal direction 3. Superscripts are the array's first indices.
struct CoefficientTable {
  int n_trunc = 3;

  // inputs kept for the model
  FrameSample frame;
  FundamentalForms forms;
  GapSample gap;
  double sqrtA0 = 1.0;
  double w = 0.0;         // dX/dt . a3
  double dw[2] = {0, 0};  // d/dxi_l (dX/dt . a3)
  double adot[3][3] = {};      // a_i . a_k
  double a3da[2][3] = {};      // a3 . d a_k / d xi_l   [l][k]

  double alpha[3][kSeries] = {};
  double beta[3][kSeries] = {};
  double dalpha[3][kSeries][2] = {};  // d alpha_l^n / d xi_m
  double dbeta[3][kSeries][2] = {};

  double B[kMom][3][3] = {};          // B^j_{lk}
  double C0[3] = {};                  // C^0_l
  double Cij[kMom][3] = {};           // Cij[i][l] = C^{i,i-1}_l, i = 1..3
  double D[2][3][3] = {};             // D^j_{ik}
  double H[kSeries][3][2][3] = {};    // H^j_{ilk}  [j][i][l][k]
  double I = 0.0;
  double J[kMom][kMom][3][3] = {};    // J^{i,j}_{lm}
  double iota[kMom][2][2] = {};       // iota^n_{lm}
  double K[kMom][kMom][3] = {};       // K^{j,i}_l  [j][i][l]
  double L[kMom][kMom][2][3][2] = {}; // L^{n,r}_{ikl}
  double L3[kMom][kMom][3][2] = {};   // L^{n,r}_{3kl}  [n][r][k][l]
  double Lbar[2][3][2] = {};          // Lbar^{0,0}_{ikl}
  double Q[3][3] = {};                // Q^0_{ik}; row 2 holds Q^0_{3k}
  double R[2][2] = {};                // R^0_{ik}
  double S[kMom][kMom][2][3] = {};    // S^{n,r}_{ik}
  double S3[kMom][kMom][3] = {};      // S^{n,r}_{3k}
  double Sbar[2][3] = {};             // Sbar^{0,0}_{ik}
  double eta[3] = {};
  double kappa[2] = {};
  double F[2] = {};                   // F^0_i
  double Fbar[2] = {};                // Fbar^0_i
};

// Optional force data for F and Fbar: sum of the order-one friction vectors
// (physical components) at the two surfaces and the body-force moments.
struct ForceTerms {
  bool have_friction = false;
  Vec3 fR_sum = Vec3::Zero();   // f^1_{R_1} + f^1_{R_0}
  double f00[2] = {0, 0};       // fbar_i^{0,0}
  double f10[2] = {0, 0};       // fbar_i^{1,0}; zero in consistent scenarios
  double f0_int[2] = {0, 0};    // int_0^1 f_i^0 dxi3
  double s0 = -1.0;
  double rho0 = 1.0;
};

// Everything except F / Fbar, which need force data.
CoefficientTable assemble_coefficients(const FrameSample& frame, const FundamentalForms& forms, const GapSample& gap,
                                       int n_trunc = 3);

// Fills F and Fbar. Throws MissingBoundaryData without friction data.
void apply_force_terms(CoefficientTable& c, const ForceTerms& forces);

CoefficientTable coefficients_at(const SurfaceChart& chart, const GapField& gap, double xi1, double xi2, double t,
                                 int n_trunc = 3);

// Per-node tables over the grid; threads <= 0 reads GAPFLOW_THREADS (default 1).
// Node errors are rethrown with the node index and coordinates.
std::vector<CoefficientTable> table_over_grid(const SurfaceChart& chart, const GapField& gap, const Grid& grid,
                                              double t, int n_trunc = 3, int threads = 0);

int configured_threads();

// Names accepted by coefficient_values for coeffs-dump.
std::vector<std::string> coefficient_families();
// Flattened values of a family with component labels.
void coefficient_values(const CoefficientTable& c, const std::string& family, std::vector<std::string>& labels,
                        std::vector<double>& values);

}  // namespace gapflow

#include "gapflow/model.hpp"

#include "gapflow/errors.hpp"
#include "gapflow/taylor.hpp"
#include "sparse_lu.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gapflow {

const SlipData& BoundaryData::slip() const {
  if (!is_slip()) throw VariantMismatch("boundary data is traction, slip requested");
  return std::get<SlipData>(surface);
}

const TractionData& BoundaryData::traction() const {
  if (is_slip()) throw VariantMismatch("boundary data is slip, traction requested");
  return std::get<TractionData>(surface);
}

double ForcingField::at(int i, int n, int node, double xi1, double xi2, double t) const {
  if (!nodal[i][n].empty()) return nodal[i][n][node];
  return moment ? moment(i, n, xi1, xi2, t) : 0.0;
}

void ModelState::resize(const Grid& g) {
  grid = g;
  const size_t N = g.size();
  for (int n = 0; n < kMom; ++n) {
    u[n][0].assign(N, 0.0);
    u[n][1].assign(N, 0.0);
    u3[n].assign(N, 0.0);
    p[n].assign(N, 0.0);
  }
}

std::vector<double> field_norms(const std::vector<double>& f) {
  double mx = 0.0, s = 0.0;
  for (double v : f) {
    mx = std::max(mx, std::abs(v));
    s += v * v;
  }
  return {mx, f.empty() ? 0.0 : std::sqrt(s / f.size())};
}

namespace {

// Jets of every moment at one node: components as in Comp.
template <class T>
struct Local {
  T u[kMom][2][6];
  T u3[kMom][6];
  T p[kMom][6];
  T ut[kMom][2];
  T u3t[kMom];
};

struct NodeData {
  const CoefficientTable* c = nullptr;
  double eps = 0.1, rho0 = 1.0, nu = 1.0, mu = 1.0;
  double f[3][kMom] = {};
  double V[2] = {0, 0}, W[2] = {0, 0};
  double pi0 = 0.0, pi1 = 0.0, CR1 = 0.0, s0 = -1.0;
  double trace[9] = {};
};

template <class T>
inline const T& Uc(const Local<T>& L, int k, int n, int comp) {
  return k < 2 ? L.u[n][k][comp] : L.u3[n][comp];
}

inline int second(int l, int m) { return l != m ? kD12 : (l == 0 ? kD11 : kD22); }

// acc += x * s, skipping exact zeros so dual arithmetic stays cheap.
template <class T>
inline void axpy(T& acc, const T& x, double s) {
  if (s != 0.0) acc += x * s;
}

inline double pw(double x, int n) { return std::pow(x, n); }

// Residual of the order-n momentum equation, component i (unscaled).
template <class T>
T momentum(const Local<T>& L, const NodeData& d, int n, int i) {
  const CoefficientTable& c = *d.c;
  const double h = c.gap.h, eps = d.eps, eh = eps * h, ht = c.gap.ht;
  T lhs = L.ut[n][i];
  for (int k = 0; k < 3; ++k) axpy(lhs, Uc(L, k, n, 0), c.Q[i][k]);
  for (int l = 0; l < 2; ++l) axpy(lhs, L.u[n][i][1 + l], -c.C0[l]);
  axpy(lhs, L.u[n][i][0], -(n / h) * (ht + c.C0[2]));

  for (int m = 0; m <= n; ++m)
    for (int k = 0; k < 2; ++k) {
      T inner(0.0);
      for (int j = 0; j <= n - m; ++j) {
        const int q = n - m - j;
        for (int l = 0; l < 2; ++l) {
          const double b = pw(eh, q) * c.B[q][l][k];
          if (b == 0.0) continue;
          T g = L.u[j][i][1 + l];
          for (int s = 0; s < 3; ++s) axpy(g, Uc(L, s, j, 0), c.H[0][i][l][s]);
          inner += g * b;
        }
      }
      lhs += L.u[m][k][0] * inner;
    }
  for (int m = 0; m <= n - 1; ++m)
    for (int k = 0; k < 2; ++k) {
      T inner(0.0);
      for (int j = 1; j <= n - m; ++j) {
        const int q = n - m - j;
        axpy(inner, L.u[j][i][0], j * pw(eps, q) * pw(h, q - 1) * c.B[q][2][k]);
      }
      lhs += L.u[m][k][0] * inner;
    }
  for (int m = 1; m <= n; ++m) lhs += L.u3[m][0] * L.u[n - m + 1][i][0] * ((n - m + 1) / eh);
  for (int m = 0; m <= n - 1; ++m)
    for (int l = 0; l < 2; ++l) {
      const double cc = pw(eh, n - m) * c.Cij[n - m][l];
      if (cc == 0.0) continue;
      T g = L.u[m][i][1 + l];
      for (int k = 0; k < 3; ++k) axpy(g, Uc(L, k, m, 0), c.H[0][i][l][k]);
      lhs -= g * cc;
    }
  for (int m = 0; m <= n - 2; ++m)
    axpy(lhs, L.u[m + 1][i][0], -(m + 1) * pw(eps, n - m - 1) * pw(h, n - m - 2) * c.Cij[n - m - 1][2]);

  T rhs(0.0);
  for (int m = 0; m <= n; ++m)
    for (int l = 0; l < 2; ++l) axpy(rhs, L.p[m][1 + l], -pw(eh, n - m) * c.J[0][n - m][i][l] / d.rho0);
  for (int m = 1; m <= n; ++m)
    axpy(rhs, L.p[m][0], -m * pw(eps, n - m) * pw(h, n - m - 1) * c.J[0][n - m][i][2] / d.rho0);
  for (int r = 0; r <= n; ++r) {
    T b(0.0);
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m) axpy(b, L.u[r][i][second(l, m)], c.iota[n - r][l][m]);
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 2; ++l) axpy(b, Uc(L, k, r, 1 + l), c.L[n][r][i][k][l]);
    for (int k = 0; k < 3; ++k) axpy(b, Uc(L, k, r, 0), c.S[n][r][i][k]);
    rhs += b * (d.nu * pw(eps, n - r));
  }
  if (n + 1 < kMom) axpy(rhs, L.u[n + 1][i][0], d.nu * (n + 1) / eh * c.forms.A1 / c.forms.A0);
  if (n + 2 < kMom) axpy(rhs, L.u[n + 2][i][0], d.nu * (n + 2) * (n + 1) / (eh * eh));
  rhs += d.f[i][n];
  return lhs - rhs;
}

// ubar_3^{n+1}, n = 0, 1, 2.
template <class T>
T vertical_moment(const Local<T>& L, const NodeData& d, int n) {
  const CoefficientTable& c = *d.c;
  const double h = c.gap.h, eh = d.eps * h;
  T s(0.0);
  for (int m = 0; m <= n; ++m) {
    const int q = n - m;
    T inner(0.0);
    for (int k = 0; k < 2; ++k) {
      for (int l = 0; l < 2; ++l) {
        axpy(inner, L.u[m][k][1 + l], c.B[q][l][k]);
        axpy(inner, L.u[m][k][0], c.H[q][l][l][k]);
      }
      axpy(inner, L.u3[m][0], c.H[q][k][k][2]);
      axpy(inner, L.u[m][k][0], m / h * c.B[q][2][k]);
    }
    s += inner * pw(eh, q);
  }
  return s * (-eh / (n + 1));
}

// pbar^{n+1}, n = 0, 1, 2.
template <class T>
T pressure_moment(const Local<T>& L, const NodeData& d, int n) {
  const CoefficientTable& c = *d.c;
  const double h = c.gap.h, eps = d.eps, eh = eps * h, ht = c.gap.ht;
  T P(0.0);
  if (n + 2 < kMom) axpy(P, L.u3[n + 2][0], d.mu / eh * (n + 2));
  axpy(P, L.u3[n + 1][0], d.mu * c.forms.A1 / c.forms.A0);
  for (int m = 1; m <= n; ++m) P -= L.u3[m][0] * L.u3[n - m + 1][0] * (d.rho0 / (n + 1) * (n - m + 1));

  T br = -L.u3t[n];
  for (int k = 0; k < 2; ++k) axpy(br, L.u[n][k][0], -c.Q[2][k]);
  for (int l = 0; l < 2; ++l) axpy(br, L.u3[n][1 + l], c.C0[l]);
  axpy(br, L.u3[n][0], n / h * (ht + c.C0[2]));
  for (int m = 0; m <= n - 1; ++m)
    for (int l = 0; l < 2; ++l) {
      const double cc = pw(eh, n - m) * c.Cij[n - m][l];
      if (cc == 0.0) continue;
      T g = L.u3[m][1 + l];
      for (int k = 0; k < 2; ++k) axpy(g, L.u[m][k][0], c.a3da[l][k]);
      br += g * cc;
    }
  for (int m = 0; m <= n - 2; ++m)
    axpy(br, L.u3[m + 1][0], (m + 1) * pw(eps, n - m - 1) * pw(h, n - m - 2) * c.Cij[n - m - 1][2]);
  for (int m = 0; m <= n; ++m)
    for (int k = 0; k < 2; ++k) {
      T inner(0.0);
      for (int j = 0; j <= n - m; ++j) {
        const int q = n - m - j;
        for (int l = 0; l < 2; ++l) {
          const double b = pw(eh, q) * c.B[q][l][k];
          if (b == 0.0) continue;
          T g = L.u3[j][1 + l];
          for (int s = 0; s < 3; ++s) axpy(g, Uc(L, s, j, 0), c.a3da[l][s]);
          inner += g * b;
        }
      }
      br -= L.u[m][k][0] * inner;
    }
  for (int m = 0; m <= n - 1; ++m)
    for (int k = 0; k < 2; ++k) {
      T inner(0.0);
      for (int j = 0; j <= n - m - 1; ++j)
        axpy(inner, L.u3[n - m - j][0], (n - m - j) * pw(eps, j) * pw(h, j - 1) * c.B[j][2][k]);
      br -= L.u[m][k][0] * inner;
    }
  for (int r = 0; r <= n; ++r) {
    T b(0.0);
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m) axpy(b, L.u3[r][second(l, m)], c.iota[n - r][l][m]);
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 2; ++l) axpy(b, Uc(L, k, r, 1 + l), c.L3[n][r][k][l]);
    for (int k = 0; k < 3; ++k) axpy(b, Uc(L, k, r, 0), c.S3[n][r][k]);
    br += b * (d.nu * pw(eps, n - r));
  }
  br += d.f[2][n];
  P += br * (eh * d.rho0 / (n + 1));
  return P;
}

// Coefficient of xi3^3 in the divergence.
template <class T>
T divergence(const Local<T>& L, const NodeData& d) {
  const CoefficientTable& c = *d.c;
  const double h = c.gap.h, eh = d.eps * h;
  T s(0.0);
  for (int m = 0; m <= 3; ++m) {
    const int a = 3 - m;
    T b(0.0);
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l) axpy(b, L.u[a][k][1 + l], c.B[m][l][k]);
    for (int k = 0; k < 3; ++k) axpy(b, Uc(L, k, a, 0), c.H[m][0][0][k] + c.H[m][1][1][k]);
    for (int k = 0; k < 2; ++k) axpy(b, L.u[a][k][0], a / h * c.B[m][2][k]);
    s += b * pw(eh, m);
  }
  return s;
}

// Cartesian velocity gradient G_ij = d u_i / d x_j and velocity at height xi3.
template <class T>
void velocity_gradient(const Local<T>& L, const NodeData& d, double xi3, T G[3][3], T up[3]) {
  const CoefficientTable& c = *d.c;
  const FrameSample& fr = c.frame;
  const double h = c.gap.h, eps = d.eps;
  T Um[3], dUm[3][2], d3Um[3];
  for (int m = 0; m < 3; ++m) {
    Um[m] = T(0.0);
    d3Um[m] = T(0.0);
    dUm[m][0] = dUm[m][1] = T(0.0);
    for (int n = 0; n < kMom; ++n) {
      const double x = pw(xi3, n);
      axpy(Um[m], Uc(L, m, n, 0), x);
      axpy(dUm[m][0], Uc(L, m, n, kD1), x);
      axpy(dUm[m][1], Uc(L, m, n, kD2), x);
      if (n > 0) axpy(d3Um[m], Uc(L, m, n, 0), n * pw(xi3, n - 1));
    }
  }
  T g[2][3], d3[3];
  for (int x = 0; x < 3; ++x) {
    for (int l = 0; l < 2; ++l) {
      g[l][x] = T(0.0);
      for (int m = 0; m < 3; ++m) {
        axpy(g[l][x], dUm[m][l], fr.a[m][x]);
        axpy(g[l][x], Um[m], fr.da[m][l][x]);
      }
    }
    d3[x] = T(0.0);
    up[x] = T(0.0);
    for (int m = 0; m < 3; ++m) {
      axpy(d3[x], d3Um[m], fr.a[m][x]);
      axpy(up[x], Um[m], fr.a[m][x]);
    }
  }
  Vec3 b[3];
  for (int l = 0; l < 2; ++l) {
    double al = 0.0, be = 0.0;
    for (int r = 0; r < kSeries; ++r) {
      al += pw(eps * xi3 * h, r) * c.alpha[l][r];
      be += pw(eps * xi3 * h, r) * c.beta[l][r];
    }
    b[l] = al * fr.a[0] + be * fr.a[1];
  }
  {
    double al = 0.0, be = 0.0;
    for (int r = 0; r < kSeries; ++r) {
      const double s = pw(eps, r) * pw(xi3, r + 1) * pw(h, r - 1);
      al += s * c.alpha[2][r];
      be += s * c.beta[2][r];
    }
    b[2] = al * fr.a[0] + be * fr.a[1] + fr.a[2] / (eps * h);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      G[i][j] = T(0.0);
      axpy(G[i][j], g[0][i], b[0][j]);
      axpy(G[i][j], g[1][i], b[1][j]);
      axpy(G[i][j], d3[i], b[2][j]);
    }
}

template <class T>
void friction(const T up[3], const NodeData& d, T fR[3]) {
  for (int x = 0; x < 3; ++x) fR[x] = T(0.0);
  if (d.CR1 == 0.0) return;
  using std::sqrt;
  const T nrm = sqrt(up[0] * up[0] + up[1] * up[1] + up[2] * up[2]);
  for (int x = 0; x < 3; ++x) fR[x] = up[x] * nrm * (d.rho0 * d.eps * d.CR1);
}

// Tangential traction rows on xi3 = 0: (sigma n0) . a_i + fR0 . a_i.
template <class T>
void lower_traction(const Local<T>& L, const NodeData& d, T out[2]) {
  const FrameSample& fr = d.c->frame;
  T G[3][3], up[3], fR[3], s[3];
  velocity_gradient(L, d, 0.0, G, up);
  friction(up, d, fR);
  for (int x = 0; x < 3; ++x) {
    s[x] = T(0.0);
    for (int y = 0; y < 3; ++y) axpy(s[x], G[x][y] + G[y][x], fr.a[2][y]);
  }
  for (int i = 0; i < 2; ++i) {
    out[i] = T(0.0);
    for (int x = 0; x < 3; ++x) {
      axpy(out[i], s[x], d.s0 * d.mu * fr.a[i][x]);
      axpy(out[i], fR[x], fr.a[i][x]);
    }
  }
}

struct UpperFrame {
  Vec3 v[2];
  Vec3 n1;
};

inline UpperFrame upper_frame(const CoefficientTable& c, double eps, double s0) {
  UpperFrame u;
  for (int i = 0; i < 2; ++i)
    u.v[i] = c.frame.a[i] + eps * (c.gap.dh[i] * c.frame.a[2] + c.gap.h * c.frame.da[2][i]);
  const Vec3 v3 = u.v[0].cross(u.v[1]);
  u.n1 = -s0 * v3 / v3.norm();
  return u;
}

// Tangential traction rows on xi3 = 1: (sigma n1) . v_i + fR1 . v_i.
template <class T>
void upper_traction(const Local<T>& L, const NodeData& d, T out[2]) {
  const UpperFrame uf = upper_frame(*d.c, d.eps, d.s0);
  T G[3][3], up[3], fR[3], s[3];
  velocity_gradient(L, d, 1.0, G, up);
  friction(up, d, fR);
  for (int x = 0; x < 3; ++x) {
    s[x] = T(0.0);
    for (int y = 0; y < 3; ++y) axpy(s[x], G[x][y] + G[y][x], uf.n1[y]);
  }
  for (int i = 0; i < 2; ++i) {
    out[i] = T(0.0);
    for (int x = 0; x < 3; ++x) {
      axpy(out[i], s[x], d.mu * uf.v[i][x]);
      axpy(out[i], fR[x], uf.v[i][x]);
    }
  }
}

enum NodeKind { kSlipInterior = 0, kTractionInterior = 1, kLateral = 2 };
constexpr int kFields = 13;
constexpr int kP0 = 8, kP1 = 12;
inline int fU(int n, int i) { return 2 * n + i; }
inline int fU3(int m) { return 8 + m; }

// The 13 scaled rows of one node (stabilisation and gauge are added outside).
template <class T>
void node_rows(const Local<T>& L, const NodeData& d, NodeKind kind, T r[kFields]) {
  const double eps = d.eps, h = d.c->gap.h;
  if (kind == kLateral) {
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) r[fU(n, i)] = L.u[n][i][0] - d.trace[fU(n, i)];
    r[kP0] = L.p[0][0] - d.trace[8];
  } else {
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 2; ++i) r[2 * n + i] = momentum(L, d, n, i) * (eps * eps);
    if (kind == kSlipInterior) {
      for (int i = 0; i < 2; ++i) {
        r[4 + i] = L.u[0][i][0] - d.V[i];
        r[6 + i] = L.u[1][i][0] + L.u[2][i][0] + L.u[3][i][0] - (d.W[i] - d.V[i]);
      }
      r[8] = (L.u3[1][0] + L.u3[2][0] + L.u3[3][0] - eps * d.c->gap.ht) * (1.0 / eps);
    } else {
      T lo[2], hi[2];
      lower_traction(L, d, lo);
      upper_traction(L, d, hi);
      for (int i = 0; i < 2; ++i) {
        r[4 + i] = lo[i] * (eps / d.mu);
        r[6 + i] = hi[i] * (eps / d.mu);
      }
      r[8] = (-L.p[0][0] + L.u3[1][0] * (2.0 * d.mu / (eps * h)) + d.pi0) * (1.0 / d.mu);
    }
  }
  for (int n = 0; n < 3; ++n) r[fU3(n + 1)] = (L.u3[n + 1][0] - vertical_moment(L, d, n)) * (1.0 / eps);
  r[kP1] = (L.p[1][0] - pressure_moment(L, d, 0)) * (1.0 / d.mu);
}

constexpr int kSlots = 51;
using AD = Dual<kSlots>;

struct Slot {
  int field;
  int comp;
};

std::array<Slot, kSlots> make_slots() {
  std::array<Slot, kSlots> s{};
  int k = 0;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 6; ++c) s[k++] = {fU(n, i), c};
  for (int n = 2; n < 4; ++n)
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 3; ++c) s[k++] = {fU(n, i), c};
  for (int c = 0; c < 3; ++c) s[k++] = {kP0, c};
  for (int m = 1; m <= 3; ++m)
    for (int c = 0; c < 3; ++c) s[k++] = {fU3(m), c};
  for (int c = 0; c < 3; ++c) s[k++] = {kP1, c};
  return s;
}

const std::array<Slot, kSlots> kSlotMap = make_slots();

template <class T>
T& field_ref(Local<T>& L, int field, int comp) {
  if (field < 8) return L.u[field / 2][field % 2][comp];
  if (field == kP0) return L.p[0][comp];
  if (field == kP1) return L.p[1][comp];
  return L.u3[field - 8][comp];
}

template <class T>
Local<T> promote(const Local<double>& a) {
  Local<T> b;
  for (int n = 0; n < kMom; ++n) {
    for (int c = 0; c < 6; ++c) {
      b.u[n][0][c] = T(a.u[n][0][c]);
      b.u[n][1][c] = T(a.u[n][1][c]);
      b.u3[n][c] = T(a.u3[n][c]);
      b.p[n][c] = T(a.p[n][c]);
    }
    b.ut[n][0] = T(a.ut[n][0]);
    b.ut[n][1] = T(a.ut[n][1]);
    b.u3t[n] = T(a.u3t[n]);
  }
  return b;
}

}  // namespace

struct NewModel::Impl {
  explicit Impl(const Grid& g) : D(g, 2) {}

  Differentiator D;
  CondensedLU lu;
  bool have_lu = false;
  std::vector<std::array<std::vector<WeightedNode>, 6>> W;
  // (compact - composed) second-difference weights per node and axis
  std::vector<std::array<std::vector<WeightedNode>, 2>> stab;
  mutable std::shared_ptr<const Level> cached;
};

NewModel::NewModel(Problem p) : pb_(std::move(p)) {
  if (!pb_.chart) throw Error("problem has no chart");
  if (pb_.grid.nodes(0) < 4 || pb_.grid.nodes(1) < 4) throw Error("grid must be at least 4x4");
  if (pb_.gap.eps() * pb_.gap.floor() < 1e-12) throw Error("eps * h0 below 1e-12");
  if (pb_.fluid.rho0 <= 0.0 || pb_.fluid.nu <= 0.0) throw Error("fluid properties must be positive");
  impl_ = std::make_unique<Impl>(pb_.grid);
  const Grid& g = pb_.grid;
  const int N = g.size();
  impl_->W.resize(N);
  impl_->stab.resize(N);
  for (int node = 0; node < N; ++node)
    for (int c = 0; c < 6; ++c) impl_->D.weights(node, static_cast<Comp>(c), impl_->W[node][c]);
  for (int node = 0; node < N; ++node) {
    if (g.boundary(node)) continue;
    for (int a = 0; a < 2; ++a) {
      auto& out = impl_->stab[node][a];
      const Comp cc = a == 0 ? kD11 : kD22;
      const Comp c1 = a == 0 ? kD1 : kD2;
      for (const auto& wn : impl_->W[node][cc]) out.push_back(wn);
      for (const auto& outer : impl_->W[node][c1])
        for (const auto& inner : impl_->W[outer.node][c1]) out.push_back({inner.node, -outer.w * inner.w});
    }
  }
}

NewModel::~NewModel() = default;

std::shared_ptr<const Level> NewModel::level(double t) const {
  if (impl_->cached && impl_->cached->t == t) return impl_->cached;
  auto lv = std::make_shared<Level>();
  const Grid& g = pb_.grid;
  const int N = g.size();
  lv->t = t;
  lv->tab = table_over_grid(*pb_.chart, pb_.gap, g, t, pb_.n_trunc, pb_.opts.threads);
  lv->w.resize(N);
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < kMom; ++n) lv->f[i][n].resize(N);
  const bool slip = pb_.bc.is_slip();
  for (int k = 0; k < 2; ++k) {
    lv->V[k].assign(N, 0.0);
    lv->W[k].assign(N, 0.0);
  }
  lv->pi0.assign(N, 0.0);
  lv->pi1.assign(N, 0.0);
  for (int node = 0; node < N; ++node) {
    const double x = g.coord(0, g.ix(node)), y = g.coord(1, g.jx(node));
    lv->w[node] = lv->tab[node].w;
    for (int i = 0; i < 3; ++i)
      for (int n = 0; n < kMom; ++n) lv->f[i][n][node] = pb_.forcing.at(i, n, node, x, y, t);
    if (slip) {
      double V[2] = {0, 0}, W[2] = {0, 0};
      if (pb_.bc.slip().velocity) pb_.bc.slip().velocity(x, y, t, V, W);
      for (int k = 0; k < 2; ++k) {
        lv->V[k][node] = V[k];
        lv->W[k][node] = W[k];
      }
    } else {
      const TractionData& tr = pb_.bc.traction();
      lv->pi0[node] = tr.pi0 ? tr.pi0(x, y, t) : 0.0;
      lv->pi1[node] = tr.pi1 ? tr.pi1(x, y, t) : 0.0;
    }
  }
  impl_->cached = lv;
  return lv;
}

namespace {

struct Ctx {
  const Problem* pb;
  const Differentiator* D;
  const Level* lv;
  const ModelState* prev;
  double inv_dt;
};

NodeData node_data(const Ctx& x, int node) {
  NodeData d;
  const Problem& pb = *x.pb;
  d.c = &x.lv->tab[node];
  d.eps = pb.gap.eps();
  d.rho0 = pb.fluid.rho0;
  d.nu = pb.fluid.nu;
  d.mu = pb.fluid.mu();
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < kMom; ++n) d.f[i][n] = x.lv->f[i][n][node];
  for (int k = 0; k < 2; ++k) {
    d.V[k] = x.lv->V[k][node];
    d.W[k] = x.lv->W[k][node];
  }
  d.pi0 = x.lv->pi0[node];
  d.pi1 = x.lv->pi1[node];
  if (!pb.bc.is_slip()) {
    d.CR1 = pb.bc.traction().CR1;
    d.s0 = pb.bc.traction().s0;
  }
  if (pb.grid.boundary(node) && pb.bc.trace) {
    const Grid& g = pb.grid;
    pb.bc.trace(g.coord(0, g.ix(node)), g.coord(1, g.jx(node)), x.lv->t, d.trace);
  }
  return d;
}

void put_jet(const Differentiator& D, const std::vector<double>& f, int node, double* out) {
  const Jet6 j = D.jet(f, node);
  for (int c = 0; c < 6; ++c) out[c] = j.c[c];
}

Local<double> local_at(const Ctx& x, const ModelState& s, int node) {
  Local<double> L;
  for (int n = 0; n < kMom; ++n) {
    put_jet(*x.D, s.u[n][0], node, L.u[n][0]);
    put_jet(*x.D, s.u[n][1], node, L.u[n][1]);
    put_jet(*x.D, n == 0 ? x.lv->w : s.u3[n], node, L.u3[n]);
    put_jet(*x.D, s.p[n], node, L.p[n]);
    for (int i = 0; i < 2; ++i) L.ut[n][i] = x.prev ? (s.u[n][i][node] - x.prev->u[n][i][node]) * x.inv_dt : 0.0;
    const double u3n = n == 0 ? x.lv->w[node] : s.u3[n][node];
    L.u3t[n] = x.prev ? (u3n - x.prev->u3[n][node]) * x.inv_dt : 0.0;
  }
  return L;
}

NodeKind kind_of(const Problem& pb, int node) {
  if (pb.grid.boundary(node)) return kLateral;
  return pb.bc.is_slip() ? kSlipInterior : kTractionInterior;
}

bool needs_gauge(const Problem& pb) { return pb.bc.is_slip() && pb.grid.periodic[0] && pb.grid.periodic[1]; }

double stab_coeff(const Problem& pb, const CoefficientTable& c, int axis) {
  const double eps = pb.gap.eps(), h = c.gap.h;
  return h / 6.0 * (eps * eps * h * h / (2.0 * pb.fluid.mu())) * c.J[0][0][axis][axis];
}

int unknowns(const Problem& pb) { return pb.grid.size() * kFields + (needs_gauge(pb) ? 1 : 0); }

// Rows solved for their own unknown, ordered so the block is lower triangular:
// lateral traces, slip constraints, then vertical moments and pbar^1 by degree.
std::vector<std::pair<int, int>> elimination_order(const Problem& pb) {
  std::vector<std::pair<int, int>> e;
  if (!pb.opts.condense) return e;
  const int N = pb.grid.size();
  auto at = [](int node, int f) { return node * kFields + f; };
  for (int node = 0; node < N; ++node) {
    if (kind_of(pb, node) != kLateral) continue;
    for (int f = 0; f <= kP0; ++f) e.emplace_back(at(node, f), at(node, f));
  }
  for (int g = 0; g < 2; ++g)
    for (int node = 0; node < N; ++node) {
      if (kind_of(pb, node) != kSlipInterior) continue;
      for (int i = 0; i < 2; ++i) e.emplace_back(at(node, 4 + 2 * g + i), at(node, fU(g, i)));
    }
  for (int f : {fU3(1), fU3(2), fU3(3), kP1})
    for (int node = 0; node < N; ++node) e.emplace_back(at(node, f), at(node, f));
  return e;
}

void pack(const ModelState& s, double lambda, const Problem& pb, Eigen::VectorXd& z) {
  const int N = pb.grid.size();
  z.resize(unknowns(pb));
  for (int node = 0; node < N; ++node) {
    double* zz = z.data() + node * kFields;
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) zz[fU(n, i)] = s.u[n][i][node];
    zz[kP0] = s.p[0][node];
    for (int m = 1; m <= 3; ++m) zz[fU3(m)] = s.u3[m][node];
    zz[kP1] = s.p[1][node];
  }
  if (needs_gauge(pb)) z[N * kFields] = lambda;
}

void unpack(const Eigen::VectorXd& z, const Problem& pb, ModelState& s, double& lambda) {
  const int N = pb.grid.size();
  for (int node = 0; node < N; ++node) {
    const double* zz = z.data() + node * kFields;
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) s.u[n][i][node] = zz[fU(n, i)];
    s.p[0][node] = zz[kP0];
    for (int m = 1; m <= 3; ++m) s.u3[m][node] = zz[fU3(m)];
    s.p[1][node] = zz[kP1];
  }
  if (needs_gauge(pb)) lambda = z[N * kFields];
}

// Kinematic-row additions: stabilisation, gauge multiplier.
void linear_extras_residual(const Ctx& x, const std::vector<std::array<std::vector<WeightedNode>, 2>>& stab,
                            const ModelState& s, double lambda, Eigen::VectorXd& R) {
  const Problem& pb = *x.pb;
  const int N = pb.grid.size();
  if (!pb.bc.is_slip()) return;
  for (int node = 0; node < N; ++node) {
    if (pb.grid.boundary(node)) continue;
    double add = 0.0;
    if (pb.opts.stabilize)
      for (int a = 0; a < 2; ++a) {
        const double cs = stab_coeff(pb, x.lv->tab[node], a);
        for (const auto& wn : stab[node][a]) add += cs * wn.w * s.p[0][wn.node];
      }
    if (needs_gauge(pb)) add += lambda;
    R[node * kFields + kP0] += add;
  }
  if (needs_gauge(pb)) {
    double mean = 0.0;
    for (int node = 0; node < N; ++node) mean += s.p[0][node];
    R[N * kFields] = mean / N;
  }
}

void residual(const Ctx& x, const std::vector<std::array<std::vector<WeightedNode>, 2>>& stab, const ModelState& s,
              double lambda, Eigen::VectorXd& R) {
  const Problem& pb = *x.pb;
  const int N = pb.grid.size();
  R.setZero(unknowns(pb));
  for (int node = 0; node < N; ++node) {
    const NodeData d = node_data(x, node);
    const Local<double> L = local_at(x, s, node);
    double r[kFields];
    node_rows(L, d, kind_of(pb, node), r);
    for (int k = 0; k < kFields; ++k) R[node * kFields + k] = r[k];
  }
  linear_extras_residual(x, stab, s, lambda, R);
}

SpMat jacobian(const Ctx& x, const std::vector<std::array<std::vector<WeightedNode>, 6>>& W,
               const std::vector<std::array<std::vector<WeightedNode>, 2>>& stab, const ModelState& s) {
  const Problem& pb = *x.pb;
  const int N = pb.grid.size();
  const int M = unknowns(pb);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(N) * kFields * 48);
  std::vector<std::pair<int, double>> row;
  for (int node = 0; node < N; ++node) {
    const NodeData d = node_data(x, node);
    const Local<double> L0 = local_at(x, s, node);
    Local<AD> L = promote<AD>(L0);
    for (int k = 0; k < kSlots; ++k) field_ref(L, kSlotMap[k].field, kSlotMap[k].comp).d[k] = 1.0;
    if (x.prev) {
      for (int k = 0; k < kSlots; ++k) {
        const Slot& sl = kSlotMap[k];
        if (sl.comp != kVal) continue;
        if (sl.field < 8) L.ut[sl.field / 2][sl.field % 2].d[k] = x.inv_dt;
        else if (sl.field != kP0 && sl.field != kP1) L.u3t[sl.field - 8].d[k] = x.inv_dt;
      }
    }
    AD r[kFields];
    node_rows(L, d, kind_of(pb, node), r);
    for (int k = 0; k < kFields; ++k) {
      row.clear();
      for (int q = 0; q < kSlots; ++q) {
        const double v = r[k].d[q];
        if (v == 0.0) continue;
        const Slot& sl = kSlotMap[q];
        for (const auto& wn : W[node][sl.comp]) row.emplace_back(wn.node * kFields + sl.field, v * wn.w);
      }
      std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (size_t a = 0; a < row.size();) {
        size_t b = a;
        double v = 0.0;
        while (b < row.size() && row[b].first == row[a].first) v += row[b++].second;
        trip.emplace_back(node * kFields + k, row[a].first, v);
        a = b;
      }
    }
  }
  if (pb.bc.is_slip()) {
    for (int node = 0; node < N; ++node) {
      if (pb.grid.boundary(node)) continue;
      const int rr = node * kFields + kP0;
      if (pb.opts.stabilize)
        for (int a = 0; a < 2; ++a) {
          const double cs = stab_coeff(pb, x.lv->tab[node], a);
          for (const auto& wn : stab[node][a]) trip.emplace_back(rr, wn.node * kFields + kP0, cs * wn.w);
        }
      if (needs_gauge(pb)) trip.emplace_back(rr, N * kFields, 1.0);
    }
    if (needs_gauge(pb))
      for (int node = 0; node < N; ++node) trip.emplace_back(N * kFields, node * kFields + kP0, 1.0 / N);
  }
  SpMat J(M, M);
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

}  // namespace

ModelState NewModel::initial_state(double t) const {
  auto lv = level(t);
  const Grid& g = pb_.grid;
  ModelState s(g);
  s.t = t;
  s.u3[0] = lv->w;
  const int N = g.size();
  for (int node = 0; node < N; ++node) {
    if (pb_.bc.is_slip()) {
      for (int i = 0; i < 2; ++i) {
        s.u[0][i][node] = lv->V[i][node];
        s.u[1][i][node] = lv->W[i][node] - lv->V[i][node];
      }
    } else {
      s.p[0][node] = lv->pi0[node];
    }
    if (g.boundary(node) && pb_.bc.trace) {
      double tr[9];
      pb_.bc.trace(g.coord(0, g.ix(node)), g.coord(1, g.jx(node)), t, tr);
      for (int n = 0; n < kMom; ++n)
        for (int i = 0; i < 2; ++i) s.u[n][i][node] = tr[fU(n, i)];
      s.p[0][node] = tr[8];
    }
  }
  reconstruct_vertical(s);
  reconstruct_pressure(s);
  return s;
}

void NewModel::reconstruct_vertical(ModelState& s) const {
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), nullptr, 0.0};
  const int N = pb_.grid.size();
  s.u3[0] = lv->w;
  for (int n = 0; n < 3; ++n) {
    std::vector<double> next(N);
    for (int node = 0; node < N; ++node) {
      const NodeData d = node_data(x, node);
      const Local<double> L = local_at(x, s, node);
      next[node] = vertical_moment(L, d, n);
    }
    s.u3[n + 1] = std::move(next);
  }
}

void NewModel::reconstruct_pressure(ModelState& s, const ModelState* prev, double dt) const {
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), prev, prev && dt > 0.0 ? 1.0 / dt : 0.0};
  if (!prev) x.prev = nullptr;
  const int N = pb_.grid.size();
  std::vector<double> out[3];
  for (int n = 0; n < 3; ++n) out[n].resize(N);
  for (int node = 0; node < N; ++node) {
    const NodeData d = node_data(x, node);
    const Local<double> L = local_at(x, s, node);
    for (int n = 0; n < 3; ++n) out[n][node] = pressure_moment(L, d, n);
  }
  for (int n = 0; n < 3; ++n) s.p[n + 1] = std::move(out[n]);
}

std::vector<double> NewModel::momentum_residual(const ModelState& s, int n, int i, const ModelState* prev,
                                                double dt) const {
  if (n < 0 || n >= kMom || i < 0 || i > 1) throw Error("momentum order or component out of range");
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), prev, prev && dt > 0.0 ? 1.0 / dt : 0.0};
  const int N = pb_.grid.size();
  const double e2 = eps() * eps();
  std::vector<double> r(N);
  for (int node = 0; node < N; ++node) {
    const NodeData d = node_data(x, node);
    r[node] = momentum(local_at(x, s, node), d, n, i) * e2;
  }
  return r;
}

std::vector<double> NewModel::divergence_residual(const ModelState& s) const {
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), nullptr, 0.0};
  const int N = pb_.grid.size();
  std::vector<double> r(N);
  for (int node = 0; node < N; ++node) r[node] = divergence(local_at(x, s, node), node_data(x, node));
  return r;
}

std::vector<double> NewModel::slip_residual(const ModelState& s) const {
  pb_.bc.slip();
  auto lv = level(s.t);
  const int N = pb_.grid.size();
  std::vector<double> r(N, 0.0);
  for (int node = 0; node < N; ++node) {
    if (pb_.grid.boundary(node)) continue;
    for (int i = 0; i < 2; ++i) {
      const double a = s.u[0][i][node] - lv->V[i][node];
      const double b = s.u[1][i][node] + s.u[2][i][node] + s.u[3][i][node] - (lv->W[i][node] - lv->V[i][node]);
      r[node] = std::max({r[node], std::abs(a), std::abs(b)});
    }
  }
  return r;
}

std::vector<double> NewModel::traction_residual(const ModelState& s) const {
  pb_.bc.traction();
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), nullptr, 0.0};
  const int N = pb_.grid.size();
  std::vector<double> r(N, 0.0);
  for (int node = 0; node < N; ++node) {
    if (pb_.grid.boundary(node)) continue;
    const NodeData d = node_data(x, node);
    const Local<double> L = local_at(x, s, node);
    double rows[kFields];
    node_rows(L, d, kTractionInterior, rows);
    for (int k = 4; k <= 8; ++k) r[node] = std::max(r[node], std::abs(rows[k]));
  }
  return r;
}

std::vector<double> NewModel::upper_normal_traction(const ModelState& s) const {
  const TractionData& tr = pb_.bc.traction();
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), nullptr, 0.0};
  const int N = pb_.grid.size();
  std::vector<double> r(N, 0.0);
  for (int node = 0; node < N; ++node) {
    const NodeData d = node_data(x, node);
    const Local<double> L = local_at(x, s, node);
    const UpperFrame uf = upper_frame(*d.c, d.eps, tr.s0);
    double G[3][3], up[3];
    velocity_gradient(L, d, 1.0, G, up);
    double p1 = 0.0;
    for (int n = 0; n < kMom; ++n) p1 += s.p[n][node];
    double tn = -p1;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) tn += d.mu * (G[a][b] + G[b][a]) * uf.n1[a] * uf.n1[b];
    r[node] = tn + d.pi1;
  }
  return r;
}

void NewModel::apply_slip_bc(ModelState& s) const {
  pb_.bc.slip();
  auto lv = level(s.t);
  const int N = pb_.grid.size();
  for (int node = 0; node < N; ++node)
    for (int i = 0; i < 2; ++i) {
      s.u[0][i][node] = lv->V[i][node];
      s.u[1][i][node] = lv->W[i][node] - lv->V[i][node] - s.u[2][i][node] - s.u[3][i][node];
    }
}

PointValue NewModel::evaluate(const ModelState& s, int node, double xi3) const {
  if (!(xi3 >= 0.0 && xi3 <= 1.0)) throw Xi3OutOfRange("xi3 = " + std::to_string(xi3) + " outside [0, 1]");
  const Grid& g = pb_.grid;
  const FrameSample fr = evaluate_frame(*pb_.chart, g.coord(0, g.ix(node)), g.coord(1, g.jx(node)), s.t);
  PointValue pv;
  for (int n = 0; n < kMom; ++n) {
    const double x = std::pow(xi3, n);
    pv.u[0] += x * s.u[n][0][node];
    pv.u[1] += x * s.u[n][1][node];
    pv.u[2] += x * s.u3[n][node];
    pv.p += x * s.p[n][node];
  }
  pv.velocity = pv.u[0] * fr.a[0] + pv.u[1] * fr.a[1] + pv.u[2] * fr.a[2];
  return pv;
}

NewModel::OperatorSample NewModel::operator_sample(const ModelState& s0, int stencil_order) const {
  const Differentiator D(pb_.grid, stencil_order);
  auto lv = level(s0.t);
  Ctx x{&pb_, &D, lv.get(), nullptr, 0.0};
  const int N = pb_.grid.size();
  ModelState s = s0;
  s.u3[0] = lv->w;
  for (int n = 0; n < 3; ++n) {
    std::vector<double> next(N);
    for (int node = 0; node < N; ++node) next[node] = vertical_moment(local_at(x, s, node), node_data(x, node), n);
    s.u3[n + 1] = std::move(next);
  }
  {
    std::vector<double> out[3];
    for (int n = 0; n < 3; ++n) out[n].resize(N);
    for (int node = 0; node < N; ++node) {
      const Local<double> L = local_at(x, s, node);
      const NodeData d = node_data(x, node);
      for (int n = 0; n < 3; ++n) out[n][node] = pressure_moment(L, d, n);
    }
    for (int n = 0; n < 3; ++n) s.p[n + 1] = std::move(out[n]);
  }
  OperatorSample o;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i) o.momentum[n][i].resize(N);
  o.kinematic.resize(N);
  for (int node = 0; node < N; ++node) {
    const Local<double> L = local_at(x, s, node);
    const NodeData d = node_data(x, node);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 2; ++i) o.momentum[n][i][node] = momentum(L, d, n, i);
    o.kinematic[node] = s.u3[1][node] + s.u3[2][node] + s.u3[3][node] - eps() * d.c->gap.ht;
  }
  return o;
}

namespace {

SolveStats newton(const Problem& pb, NewModel::Impl& im, const Ctx& x, ModelState& s) {
  SolveStats st;
  const SolverOptions& o = pb.opts;
  s.u3[0] = x.lv->w;
  double lambda = 0.0;
  Eigen::VectorXd z, R;
  pack(s, lambda, pb, z);
  double prev_rn = -1.0;
  bool fresh = false;
  for (int it = 0; it <= o.max_iters; ++it) {
    residual(x, im.stab, s, lambda, R);
    const double rn = R.lpNorm<Eigen::Infinity>();
    st.history.push_back(rn);
    st.residual = rn;
    st.iterations = it;
    if (!std::isfinite(rn)) throw NonConvergence("residual is not finite", it, st.history);
    if (rn <= o.tol) return st;
    if (it == o.max_iters) break;
    const bool slow = prev_rn >= 0.0 && rn > o.contraction * prev_rn;
    if (!im.have_lu || (slow && !fresh)) {
      const SpMat J = jacobian(x, im.W, im.stab, s);
      if (!im.lu.factor(J, elimination_order(pb))) {
        im.have_lu = false;
        throw SingularOperator("new-model Jacobian is singular");
      }
      im.have_lu = true;
      fresh = true;
      ++st.factorizations;
    } else {
      fresh = false;
    }
    const Eigen::VectorXd dz = im.lu.solve(R);
    z -= dz;
    unpack(z, pb, s, lambda);
    const double dn = dz.lpNorm<Eigen::Infinity>(), zn = z.lpNorm<Eigen::Infinity>();
    if (dn <= o.rel_tol * zn + o.abs_tol) {
      residual(x, im.stab, s, lambda, R);
      st.residual = R.lpNorm<Eigen::Infinity>();
      st.history.push_back(st.residual);
      st.iterations = it + 1;
      if (st.residual <= 1e3 * o.tol) return st;
    }
    if (prev_rn >= 0.0 && rn > 1e6 * st.history.front() && rn > 1.0)
      throw NonConvergence("Newton iteration diverged", it, st.history);
    prev_rn = rn;
  }
  throw NonConvergence("Newton iteration did not reach tolerance", st.iterations, st.history);
}

}  // namespace

SolveStats NewModel::solve_steady(ModelState& s) {
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), nullptr, 0.0};
  SolveStats st = newton(pb_, *impl_, x, s);
  reconstruct_pressure(s);
  return st;
}

SolveStats NewModel::step(ModelState& s, double dt) {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  const ModelState prev = s;
  s.t = prev.t + dt;
  auto lv = level(s.t);
  Ctx x{&pb_, &impl_->D, lv.get(), &prev, 1.0 / dt};
  SolveStats st = newton(pb_, *impl_, x, s);
  reconstruct_pressure(s, &prev, dt);
  return st;
}

}  // namespace gapflow

namespace gapflow {

double jacobian_defect(const NewModel& model, const ModelState& s0, int columns, unsigned seed) {
  const Problem& pb = model.problem();
  auto lv = model.level(s0.t);
  NewModel::Impl& im = *model.impl_;
  Ctx x{&pb, &im.D, lv.get(), nullptr, 0.0};
  ModelState s = s0;
  s.u3[0] = lv->w;
  const SpMat J = jacobian(x, im.W, im.stab, s);
  Eigen::VectorXd z, R0, R1;
  double lambda = 0.0;
  pack(s, lambda, pb, z);
  residual(x, im.stab, s, lambda, R0);
  const int M = static_cast<int>(z.size());
  double worst = 0.0;
  unsigned state = seed;
  for (int c = 0; c < columns; ++c) {
    state = state * 1664525u + 1013904223u;
    const int k = static_cast<int>(state % static_cast<unsigned>(M));
    const double dz = 1e-6 * std::max(1.0, std::abs(z[k]));
    Eigen::VectorXd zp = z;
    zp[k] += dz;
    ModelState sp = s;
    double lp = lambda;
    unpack(zp, pb, sp, lp);
    residual(x, im.stab, sp, lp, R1);
    const Eigen::VectorXd fd = (R1 - R0) / dz;
    const Eigen::VectorXd an = J.col(k);
    const double scale = std::max(1.0, an.lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (fd - an).lpNorm<Eigen::Infinity>() / scale);
  }
  return worst;
}

}  // namespace gapflow

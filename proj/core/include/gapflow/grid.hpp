#pragma once

#include "gapflow/geometry.hpp"

#include <array>
#include <vector>

namespace gapflow {

// Uniform structured grid over D. n counts cells; a periodic axis has n nodes,
// a Dirichlet axis has n + 1 nodes including both ends. Node index = i + nodes(0) * j.
struct Grid {
  int n[2] = {16, 16};
  Rect D;
  bool periodic[2] = {true, true};

  int nodes(int a) const { return periodic[a] ? n[a] : n[a] + 1; }
  int size() const { return nodes(0) * nodes(1); }
  double dx(int a) const { return D.length(a) / n[a]; }
  double coord(int a, int i) const { return D.lo[a] + i * dx(a); }
  int index(int i, int j) const { return i + nodes(0) * j; }
  int ix(int node) const { return node % nodes(0); }
  int jx(int node) const { return node / nodes(0); }
  bool boundary(int node) const {
    const int i = ix(node), j = jx(node);
    return (!periodic[0] && (i == 0 || i == nodes(0) - 1)) || (!periodic[1] && (j == 0 || j == nodes(1) - 1));
  }
};

// Finite-difference weights (Fornberg) for derivatives 0..m at z on points x.
std::vector<std::vector<double>> fd_weights(double z, const std::vector<double>& x, int m);

struct Stencil1D {
  int count = 0;
  std::array<int, 8> off{};
  std::array<double, 8> w{};
};

enum Comp { kVal = 0, kD1 = 1, kD2 = 2, kD11 = 3, kD12 = 4, kD22 = 5 };

struct Jet6 {
  double c[6] = {0, 0, 0, 0, 0, 0};
};

struct WeightedNode {
  int node;
  double w;
};

// Central stencils in the interior and on periodic axes, one-sided near Dirichlet ends.
class Differentiator {
 public:
  Differentiator(const Grid& g, int order);

  const Grid& grid() const { return g_; }
  int order() const { return order_; }

  const Stencil1D& stencil(int axis, int i, int deriv) const { return st_[axis][deriv - 1][i]; }

  double d(const std::vector<double>& f, int node, Comp c) const;
  Jet6 jet(const std::vector<double>& f, int node) const;
  // Nodes and weights forming component c at node.
  void weights(int node, Comp c, std::vector<WeightedNode>& out) const;

 private:
  int wrap(int axis, int i) const;
  Grid g_;
  int order_;
  std::vector<Stencil1D> st_[2][2];
};

}  // namespace gapflow

#include "sparse_lu.hpp"

#include <algorithm>
#include <mutex>

#ifdef GAPFLOW_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#else
#include <Eigen/SparseLU>
#endif

namespace gapflow {

struct SparseLU::Impl {
  SpMat A;  // UmfPackLU keeps pointers into the factored matrix
#ifdef GAPFLOW_HAVE_UMFPACK
  Eigen::UmfPackLU<SpMat> lu;
#else
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
#endif
};

SparseLU::SparseLU() : impl_(std::make_unique<Impl>()) {}
SparseLU::~SparseLU() = default;

bool SparseLU::factor(const SpMat& A) {
  impl_->A = A;
  impl_->A.makeCompressed();
#ifdef GAPFLOW_HAVE_UMFPACK
  // Let CHOLMOD choose between AMD/COLAMD and METIS: far less fill on periodic grids.
  impl_->lu.umfpackControl()(UMFPACK_ORDERING) = UMFPACK_ORDERING_CHOLMOD;
#endif
#ifdef GAPFLOW_HAVE_UMFPACK
  {
    // METIS inside the ordering keeps process-global state; concurrent
    // analyses would make the pivot order, and the roundoff, run dependent.
    static std::mutex analysis;
    std::lock_guard<std::mutex> lock(analysis);
    impl_->lu.analyzePattern(impl_->A);
  }
  impl_->lu.factorize(impl_->A);
#else
  impl_->lu.compute(impl_->A);
#endif
  ready_ = impl_->lu.info() == Eigen::Success;
  return ready_;
}

Eigen::VectorXd SparseLU::solve(const Eigen::VectorXd& b) const { return impl_->lu.solve(b); }

namespace {

// X = L^{-1} B for lower-triangular L, row by row with a sparse accumulator.
SpMat forward_substitute(const SpMat& L, const SpMat& B) {
  using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  const RowMat Lr = L, Br = B;
  const int n = static_cast<int>(L.rows()), m = static_cast<int>(B.cols());
  std::vector<double> acc(m, 0.0);
  std::vector<char> used(m, 0);
  std::vector<int> touched;
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  for (int r = 0; r < n; ++r) {
    touched.clear();
    auto add = [&](int c, double v) {
      if (!used[c]) {
        used[c] = 1;
        touched.push_back(c);
      }
      acc[c] += v;
    };
    for (RowMat::InnerIterator it(Br, r); it; ++it) add(static_cast<int>(it.col()), it.value());
    double diag = 0.0;
    for (RowMat::InnerIterator it(Lr, r); it; ++it) {
      const int k = static_cast<int>(it.col());
      if (k == r) {
        diag = it.value();
        continue;
      }
      for (const auto& [c, v] : rows[k]) add(c, -it.value() * v);
    }
    std::sort(touched.begin(), touched.end());
    for (int c : touched) {
      if (acc[c] != 0.0) rows[r].emplace_back(c, acc[c] / diag);
      acc[c] = 0.0;
      used[c] = 0;
    }
  }
  std::vector<Eigen::Triplet<double>> out;
  for (int r = 0; r < n; ++r)
    for (const auto& [c, v] : rows[r]) out.emplace_back(r, c, v);
  SpMat X(n, m);
  X.setFromTriplets(out.begin(), out.end());
  return X;
}

}  // namespace

bool CondensedLU::split(const SpMat& J, const std::vector<std::pair<int, int>>& pairs, SpMat& S) {
  const int M = static_cast<int>(J.rows());
  std::vector<int> rpos(M, -1), cpos(M, -1);
  rowL_.clear();
  colL_.clear();
  rowN_.clear();
  colN_.clear();
  for (const auto& [r, c] : pairs) {
    if (rpos[r] >= 0 || cpos[c] >= 0) return false;
    rpos[r] = cpos[c] = static_cast<int>(rowL_.size());
    rowL_.push_back(r);
    colL_.push_back(c);
  }
  const int nL = static_cast<int>(rowL_.size());
  for (int i = 0; i < M; ++i) {
    if (rpos[i] < 0) {
      rpos[i] = nL + static_cast<int>(rowN_.size());
      rowN_.push_back(i);
    }
    if (cpos[i] < 0) {
      cpos[i] = nL + static_cast<int>(colN_.size());
      colN_.push_back(i);
    }
  }
  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> ll, ln, nl, nn;
  std::vector<char> diag(nL, 0);
  for (int c = 0; c < J.outerSize(); ++c)
    for (SpMat::InnerIterator it(J, c); it; ++it) {
      if (it.value() == 0.0) continue;
      const int r = rpos[it.row()], k = cpos[it.col()];
      if (r < nL && k < nL) {
        if (k > r) return false;
        if (k == r) diag[r] = 1;
        ll.emplace_back(r, k, it.value());
      } else if (r < nL) {
        ln.emplace_back(r, k - nL, it.value());
      } else if (k < nL) {
        nl.emplace_back(r - nL, k, it.value());
      } else {
        nn.emplace_back(r - nL, k - nL, it.value());
      }
    }
  for (char d : diag)
    if (!d) return false;
  const int nN = M - nL;
  Lll_.resize(nL, nL);
  Lll_.setFromTriplets(ll.begin(), ll.end());
  Lln_.resize(nL, nN);
  Lln_.setFromTriplets(ln.begin(), ln.end());
  Lnl_.resize(nN, nL);
  Lnl_.setFromTriplets(nl.begin(), nl.end());
  SpMat X = forward_substitute(Lll_, Lln_);
  S.resize(nN, nN);
  S.setFromTriplets(nn.begin(), nn.end());
  S -= Lnl_ * X;
  S.prune(0.0);
  return true;
}

bool CondensedLU::factor(const SpMat& J, const std::vector<std::pair<int, int>>& pairs) {
  condensed_ = false;
  schur_size_ = J.rows();
  SpMat S;
  if (!pairs.empty() && split(J, pairs, S)) {
    condensed_ = true;
    schur_size_ = S.rows();
    return lu_.factor(S);
  }
  return lu_.factor(J);
}

Eigen::VectorXd CondensedLU::solve(const Eigen::VectorXd& b) const {
  if (!condensed_) return lu_.solve(b);
  const Eigen::Index nL = static_cast<Eigen::Index>(rowL_.size()), nN = static_cast<Eigen::Index>(rowN_.size());
  Eigen::VectorXd bL(nL), bN(nN);
  for (Eigen::Index k = 0; k < nL; ++k) bL[k] = b[rowL_[k]];
  for (Eigen::Index k = 0; k < nN; ++k) bN[k] = b[rowN_[k]];
  const Eigen::VectorXd y = Lll_.triangularView<Eigen::Lower>().solve(bL);
  const Eigen::VectorXd xN = lu_.solve(bN - Lnl_ * y);
  const Eigen::VectorXd xL = Lll_.triangularView<Eigen::Lower>().solve(bL - Lln_ * xN);
  Eigen::VectorXd x(b.size());
  for (Eigen::Index k = 0; k < nL; ++k) x[colL_[k]] = xL[k];
  for (Eigen::Index k = 0; k < nN; ++k) x[colN_[k]] = xN[k];
  return x;
}

}  // namespace gapflow

#pragma once

#include <Eigen/Sparse>

#include <memory>
#include <utility>
#include <vector>

namespace gapflow {

using SpMat = Eigen::SparseMatrix<double>;

// Direct factorisation: UMFPACK when the build found it, Eigen SparseLU otherwise.
class SparseLU {
 public:
  SparseLU();
  ~SparseLU();
  // Returns false if the matrix is numerically singular.
  bool factor(const SpMat& A);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  bool ready() const { return ready_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool ready_ = false;
};

// Static condensation for Newton systems. pairs[k] = {row, col} selects unknowns
// whose rows, taken in this order, form a lower-triangular block with a nonzero
// diagonal; they are eliminated and only the Schur complement is factorised.
// Falls back to a plain factorisation of the whole matrix when the block is not
// triangular.
class CondensedLU {
 public:
  bool factor(const SpMat& J, const std::vector<std::pair<int, int>>& pairs);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  bool condensed() const { return condensed_; }
  Eigen::Index schur_size() const { return schur_size_; }

 private:
  bool split(const SpMat& J, const std::vector<std::pair<int, int>>& pairs, SpMat& S);
  SparseLU lu_;
  SpMat Lll_, Lln_, Lnl_;
  std::vector<int> rowL_, colL_, rowN_, colN_;
  bool condensed_ = false;
  Eigen::Index schur_size_ = 0;
};

}  // namespace gapflow

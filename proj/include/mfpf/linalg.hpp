#pragma once

#include <optional>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "mfpf/error.hpp"

namespace mfpf {

enum class MatrixStructure { General, SymmetricPositiveDefinite };

/// Square linear solver over a sparse matrix. Systems up to `dense_limit`
/// unknowns are factorized densely; larger ones use a sparse factorization
/// whose symbolic analysis is reused while the sparsity pattern is unchanged.
class LinearSolver {
 public:
  static constexpr Eigen::Index kDefaultDenseLimit = 64;

  explicit LinearSolver(MatrixStructure structure = MatrixStructure::General,
                        Eigen::Index dense_limit = kDefaultDenseLimit)
      : structure_(structure), dense_limit_(dense_limit) {}

  bool is_dense() const { return dense_; }

  void factorize(const Eigen::SparseMatrix<double>& a) {
    if (a.rows() != a.cols()) throw ShapeError("linear solve needs a square matrix");
    n_ = a.rows();
    dense_ = n_ <= dense_limit_;
    if (dense_) {
      Eigen::MatrixXd d(a);
      if (structure_ == MatrixStructure::SymmetricPositiveDefinite) {
        dense_llt_.compute(d);
        if (dense_llt_.info() != Eigen::Success) throw SolverError("matrix is singular or not positive definite");
      } else {
        dense_lu_.compute(d);
      }
      return;
    }
    if (structure_ == MatrixStructure::SymmetricPositiveDefinite) {
      if (!analyzed_ || a.nonZeros() != pattern_nnz_) {
        sparse_ldlt_.analyzePattern(a);
        analyzed_ = true;
        pattern_nnz_ = a.nonZeros();
      }
      sparse_ldlt_.factorize(a);
      if (sparse_ldlt_.info() != Eigen::Success) throw SolverError("matrix is singular or not positive definite");
    } else {
      if (!analyzed_ || a.nonZeros() != pattern_nnz_) {
        sparse_lu_.analyzePattern(a);
        analyzed_ = true;
        pattern_nnz_ = a.nonZeros();
      }
      sparse_lu_.factorize(a);
      if (sparse_lu_.info() != Eigen::Success) throw SolverError("matrix is singular: " + sparse_lu_.lastErrorMessage());
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (b.size() != n_) throw ShapeError("right-hand side size mismatch");
    Eigen::VectorXd x;
    if (dense_)
      x = structure_ == MatrixStructure::SymmetricPositiveDefinite ? Eigen::VectorXd(dense_llt_.solve(b))
                                                                    : Eigen::VectorXd(dense_lu_.solve(b));
    else
      x = structure_ == MatrixStructure::SymmetricPositiveDefinite ? Eigen::VectorXd(sparse_ldlt_.solve(b))
                                                                    : Eigen::VectorXd(sparse_lu_.solve(b));
    if (!x.allFinite()) throw SolverError("matrix is singular (non-finite solution)");
    return x;
  }

 private:
  MatrixStructure structure_;
  Eigen::Index dense_limit_;
  Eigen::Index n_ = 0;
  bool dense_ = true;
  bool analyzed_ = false;
  Eigen::Index pattern_nnz_ = 0;
  Eigen::PartialPivLU<Eigen::MatrixXd> dense_lu_;
  Eigen::LLT<Eigen::MatrixXd> dense_llt_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> sparse_lu_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> sparse_ldlt_;
};

}  // namespace mfpf

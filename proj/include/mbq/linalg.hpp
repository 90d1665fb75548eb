#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

#include "mbq/rng.hpp"

namespace mbq {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Matrix-free symmetric operator v -> M v.
using LinearOperator = std::function<Vector(const Vector&)>;

/// Symmetric matrix; construction validates
/// |M(i,j) - M(j,i)| <= 1e-12 * max(1, |M(i,j)|).
class DenseSymMatrix {
 public:
  DenseSymMatrix() = default;
  explicit DenseSymMatrix(Matrix m);

  /// Averages m with its transpose, for results of floating-point products
  /// that are symmetric only up to rounding.
  static DenseSymMatrix symmetrized(const Matrix& m);

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }

 private:
  Matrix m_;
};

struct EigenDecomposition {
  Matrix basis;        // dim x k, orthonormal columns
  Vector eigenvalues;  // k, non-increasing

  Index dim() const noexcept { return basis.rows(); }
  Index size() const noexcept { return eigenvalues.size(); }
};

/// Flips each column so that its first entry with |x| > 1e-12 is positive.
void apply_sign_convention(Matrix& basis);

/// Full eigendecomposition, eigenvalues descending, sign convention applied.
EigenDecomposition sym_eigh(const DenseSymMatrix& m);

struct TopKOptions {
  // Operators with dim at or below this are materialized and solved densely.
  Index dense_threshold = 512;
  bool force_iterative = false;
  // Converged when every wanted Ritz residual is <= tol * max(1, |theta_max|).
  double tol = 1e-10;
  // Lanczos steps; 0 means min(dim, max(30 * k, 600)).
  Index max_steps = 0;
};

/// The k algebraically largest eigenpairs of a symmetric operator.
/// Iterative path: Lanczos with full reorthogonalization and random restart on
/// invariant-subspace breakdown. Throws NumericalError carrying the residual
/// norms when the step budget is exhausted.
EigenDecomposition top_k_eigenpairs(const LinearOperator& op, Index dim, Index k, Rng& rng,
                                    const TopKOptions& options = {});

/// Materializes op as a dense dim x dim matrix (column j = op(e_j)).
Matrix materialize(const LinearOperator& op, Index dim);

/// (U_A kron U_B) vec(W) = vec(U_B W U_A^T), with vec stacking the columns of
/// the n x m matrix W (m = rows of u_a, n = rows of u_b).
Vector kron_matvec(const Matrix& u_a, const Matrix& u_b, const Vector& w);

Vector standard_normal(Rng& rng, Index n);

}  // namespace mbq

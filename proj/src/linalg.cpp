#include "mbq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mbq/errors.hpp"

namespace mbq {

DenseSymMatrix::DenseSymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    std::ostringstream msg;
    msg << "DenseSymMatrix: matrix is " << m_.rows() << "x" << m_.cols() << ", not square";
    throw ValidationError(msg.str());
  }
  double worst = 0.0;
  Index wi = 0, wj = 0;
  bool bad = false;
  for (Index j = 0; j < m_.cols(); ++j) {
    for (Index i = j + 1; i < m_.rows(); ++i) {
      const double diff = std::abs(m_(i, j) - m_(j, i));
      const double bound = 1e-12 * std::max({1.0, std::abs(m_(i, j)), std::abs(m_(j, i))});
      if (!(diff <= bound)) bad = true;
      const double excess = diff / bound;
      if (!(excess <= worst)) {
        worst = excess;
        wi = i;
        wj = j;
      }
    }
  }
  if (bad) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "DenseSymMatrix: not symmetric; worst pair (" << wi << ", " << wj << "): " << m_(wi, wj)
        << " vs " << m_(wj, wi);
    throw ValidationError(msg.str());
  }
}

DenseSymMatrix DenseSymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("DenseSymMatrix::symmetrized: matrix not square");
  Matrix s = 0.5 * (m + m.transpose());
  return DenseSymMatrix(std::move(s));
}

void apply_sign_convention(Matrix& basis) {
  for (Index j = 0; j < basis.cols(); ++j) {
    for (Index i = 0; i < basis.rows(); ++i) {
      if (std::abs(basis(i, j)) > 1e-12) {
        if (basis(i, j) < 0.0) basis.col(j) *= -1.0;
        break;
      }
    }
  }
}

namespace {

// Reorders ascending solver output into descending order.
EigenDecomposition descending(const Vector& values, const Matrix& vectors, Index k) {
  const Index n = values.size();
  EigenDecomposition out;
  out.eigenvalues.resize(k);
  out.basis.resize(vectors.rows(), k);
  for (Index j = 0; j < k; ++j) {
    out.eigenvalues(j) = values(n - 1 - j);
    out.basis.col(j) = vectors.col(n - 1 - j);
  }
  apply_sign_convention(out.basis);
  return out;
}

}  // namespace

EigenDecomposition sym_eigh(const DenseSymMatrix& m) {
  if (m.dim() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eigh: eigensolver failed");
  return descending(solver.eigenvalues(), solver.eigenvectors(), m.dim());
}

Matrix materialize(const LinearOperator& op, Index dim) {
  Matrix m(dim, dim);
  Vector e = Vector::Zero(dim);
  for (Index j = 0; j < dim; ++j) {
    e(j) = 1.0;
    m.col(j) = op(e);
    e(j) = 0.0;
  }
  return m;
}

namespace {

// Two passes of classical Gram-Schmidt against the first `count` columns.
void orthogonalize(const Matrix& q, Index count, Vector& w) {
  for (int pass = 0; pass < 2; ++pass) {
    const Vector coeffs = q.leftCols(count).transpose() * w;
    w.noalias() -= q.leftCols(count) * coeffs;
  }
}

EigenDecomposition lanczos_top_k(const LinearOperator& op, Index dim, Index k, Rng& rng,
                                 const TopKOptions& options) {
  const Index budget =
      options.max_steps > 0 ? std::min(dim, options.max_steps)
                            : std::min(dim, std::max<Index>(30 * k, 600));
  Matrix q(dim, budget);
  std::vector<double> alpha, beta;  // beta[j] couples q_j and q_{j+1}
  alpha.reserve(budget);
  beta.reserve(budget);

  Vector start = standard_normal(rng, dim);
  start.normalize();
  q.col(0) = start;

  Vector ritz_values;
  Matrix ritz_vectors;  // in the Krylov basis
  std::vector<double> residuals(static_cast<std::size_t>(k), 0.0);
  double scale = 0.0;
  bool converged = false;
  Index steps = 0;

  for (Index j = 0; j < budget; ++j) {
    Vector w = op(q.col(j));
    const double a = q.col(j).dot(w);
    alpha.push_back(a);
    w -= a * q.col(j);
    if (j > 0) w -= beta[j - 1] * q.col(j - 1);
    orthogonalize(q, j + 1, w);
    double b = w.norm();
    scale = std::max(scale, std::abs(a) + b);
    steps = j + 1;

    const bool exhausted = steps == dim;
    const bool breakdown = b <= 1e-12 * std::max(scale, 1e-300);
    // A breakdown step is never a convergence point: eigenvalue copies outside
    // the current invariant subspace have not been explored yet.
    const bool check = steps >= k && (exhausted || steps == budget ||
                                      (steps % 10 == 0 && !breakdown));
    if (check) {
      Matrix t = Matrix::Zero(steps, steps);
      for (Index i = 0; i < steps; ++i) {
        t(i, i) = alpha[i];
        if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Matrix> small(t);
      ritz_values = small.eigenvalues();
      ritz_vectors = small.eigenvectors();
      const double ref = std::max(1.0, ritz_values.cwiseAbs().maxCoeff());
      converged = true;
      for (Index i = 0; i < k; ++i) {
        const double r = exhausted ? 0.0 : std::abs(b * ritz_vectors(steps - 1, steps - 1 - i));
        residuals[static_cast<std::size_t>(i)] = r;
        if (r > options.tol * ref) converged = false;
      }
      if (converged) break;
    }
    if (exhausted || steps == budget) break;

    if (breakdown) {
      // Invariant subspace found: restart with a fresh random direction so
      // that eigenvalue multiplicities outside the current space are reached.
      Vector fresh = standard_normal(rng, dim);
      orthogonalize(q, j + 1, fresh);
      fresh.normalize();
      b = 0.0;
      w = fresh;
    } else {
      w /= b;
    }
    beta.push_back(b);
    q.col(j + 1) = w;
  }

  if (!converged) {
    throw NumericalError("top_k_eigenpairs: Lanczos did not converge within " +
                             std::to_string(budget) + " steps",
                         residuals);
  }

  Vector values(steps);
  Matrix vectors = q.leftCols(steps) * ritz_vectors;
  values = ritz_values;
  return descending(values, vectors, k);
}

}  // namespace

EigenDecomposition top_k_eigenpairs(const LinearOperator& op, Index dim, Index k, Rng& rng,
                                    const TopKOptions& options) {
  if (dim < 1) throw ValidationError("top_k_eigenpairs: dim must be positive");
  if (k < 1 || k > dim) {
    throw ValidationError("top_k_eigenpairs: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(dim) + "]");
  }
  if (dim <= options.dense_threshold && !options.force_iterative) {
    const auto full = sym_eigh(DenseSymMatrix::symmetrized(materialize(op, dim)));
    EigenDecomposition out;
    out.eigenvalues = full.eigenvalues.head(k);
    out.basis = full.basis.leftCols(k);
    return out;
  }
  return lanczos_top_k(op, dim, k, rng, options);
}

Vector kron_matvec(const Matrix& u_a, const Matrix& u_b, const Vector& w) {
  const Index m = u_a.rows();
  const Index n = u_b.rows();
  if (u_a.cols() != m || u_b.cols() != n) {
    throw ValidationError("kron_matvec: factors must be square");
  }
  if (w.size() != m * n) {
    throw ValidationError("kron_matvec: vector length " + std::to_string(w.size()) +
                          " != " + std::to_string(m) + " * " + std::to_string(n));
  }
  const Eigen::Map<const Matrix> wm(w.data(), n, m);
  Matrix out = u_b * wm * u_a.transpose();
  return Eigen::Map<const Vector>(out.data(), m * n);
}

Vector standard_normal(Rng& rng, Index n) {
  if (n < 0) throw ValidationError("standard_normal: negative length");
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = rng.normal();
  return out;
}

}  // namespace mbq

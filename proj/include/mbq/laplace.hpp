#pragma once

#include <cstdint>
#include <vector>

#include "mbq/linalg.hpp"
#include "mbq/model.hpp"

namespace mbq {

/// One dense layer's weight block A kron B with cached eigendecompositions.
/// Factor eigenvalues in [-1e-8, 0) are clamped to 0 with a warning; anything
/// more negative is a NumericalError.
struct KfacBlock {
  int layer = 0;
  DenseSymMatrix factor_a;  // in x in
  DenseSymMatrix factor_b;  // out x out
  EigenDecomposition eig_a;
  EigenDecomposition eig_b;

  static KfacBlock from_factors(const KfacFactors& f);
  /// Factors rebuilt as U diag(s) U^T from the given bases and eigenvalues.
  static KfacBlock from_eigen(int layer, EigenDecomposition eig_a, EigenDecomposition eig_b);

  Index in_dim() const noexcept { return factor_a.dim(); }
  Index out_dim() const noexcept { return factor_b.dim(); }
};

std::vector<KfacBlock> make_blocks(const std::vector<KfacFactors>& factors);

constexpr double kFactorClampTolerance = 1e-8;

/// Gaussian N(theta*, N^-1 (K + beta I)^-1) over the weights; biases are held
/// at theta*.
struct LaplacePosterior {
  Vector mean;
  ParamLayout layout;
  std::vector<KfacBlock> blocks;
  Index n_train = 0;
  double beta = 0.0;
};

LaplacePosterior build_posterior(std::vector<KfacBlock> blocks, const Vector& mean,
                                 const ParamLayout& layout, Index n_train, double beta);

/// Covariance eigenvalues 1 / (N (s_a s_b + beta)) of block i, ordered
/// index j * out + i for eigenvalue pair (a_j, b_i), matching kron_matvec.
Vector block_covariance_eigenvalues(const LaplacePosterior& post, std::size_t block);

/// Marginal variances of all parameters (zero on biases).
Vector posterior_variance(const LaplacePosterior& post);

Vector sample_params(const LaplacePosterior& post, Rng& rng);

/// Keeps each factor's eigenbasis from blocks_b and re-measures the
/// eigenvalues on blocks_bt: s~ = diag(U^T C U). Eigenpairs are re-sorted by
/// the new values.
std::vector<KfacBlock> debias_kfac(const std::vector<KfacBlock>& blocks_b,
                                   const std::vector<KfacBlock>& blocks_bt);

struct PredictiveConfig {
  int samples = 40;
  std::uint64_t seed = 0;
};

/// MC average of softmax over samples of the linearized network at the mean.
Matrix predictive(const LaplacePosterior& post, const Mlp& model, const Matrix& inputs,
                  const PredictiveConfig& cfg);

/// 13 log-spaced prior precisions on [1e-4, 1] followed by 10.
std::vector<double> default_prior_grid();

}  // namespace mbq

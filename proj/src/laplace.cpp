#include "mbq/laplace.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mbq/errors.hpp"

namespace mbq {

namespace {

void clamp_eigenvalues(Vector& s, int layer, const char* which) {
  int clamped = 0;
  double worst = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) >= 0.0) continue;
    if (s(i) < -kFactorClampTolerance) {
      throw NumericalError("layer " + std::to_string(layer) + " factor " + which +
                               " has eigenvalue " + std::to_string(s(i)) + " below -1e-8",
                           {s(i)});
    }
    worst = std::min(worst, s(i));
    s(i) = 0.0;
    ++clamped;
  }
  if (clamped > 0) {
    // Round-off relative to the largest eigenvalue is only logged at debug level.
    const double scale = s.size() > 0 ? s.maxCoeff() : 0.0;
    const auto level = -worst > 1e-12 * scale ? spdlog::level::warn : spdlog::level::debug;
    spdlog::log(level, "layer {} factor {}: clamped {} negative eigenvalue(s) to 0, most negative {:.3e}",
                layer, which, clamped, worst);
  }
}

Matrix reconstruct(const EigenDecomposition& e) {
  return e.basis * e.eigenvalues.asDiagonal() * e.basis.transpose();
}

EigenDecomposition remeasure(const EigenDecomposition& e, const DenseSymMatrix& other) {
  if (other.dim() != e.dim()) throw ValidationError("debias_kfac: factor dimension mismatch");
  const Vector s = (e.basis.transpose() * other.matrix() * e.basis).diagonal();
  std::vector<Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return s(i) > s(j); });
  EigenDecomposition out;
  out.basis.resize(e.basis.rows(), e.basis.cols());
  out.eigenvalues.resize(s.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.basis.col(static_cast<Index>(k)) = e.basis.col(order[k]);
    out.eigenvalues(static_cast<Index>(k)) = s(order[k]);
  }
  return out;
}

}  // namespace

KfacBlock KfacBlock::from_factors(const KfacFactors& f) {
  KfacBlock b;
  b.layer = f.layer;
  b.factor_a = DenseSymMatrix(f.a);
  b.factor_b = DenseSymMatrix(f.b);
  b.eig_a = sym_eigh(b.factor_a);
  b.eig_b = sym_eigh(b.factor_b);
  clamp_eigenvalues(b.eig_a.eigenvalues, b.layer, "A");
  clamp_eigenvalues(b.eig_b.eigenvalues, b.layer, "B");
  return b;
}

KfacBlock KfacBlock::from_eigen(int layer, EigenDecomposition eig_a, EigenDecomposition eig_b) {
  KfacBlock b;
  b.layer = layer;
  clamp_eigenvalues(eig_a.eigenvalues, layer, "A");
  clamp_eigenvalues(eig_b.eigenvalues, layer, "B");
  b.factor_a = DenseSymMatrix::symmetrized(reconstruct(eig_a));
  b.factor_b = DenseSymMatrix::symmetrized(reconstruct(eig_b));
  b.eig_a = std::move(eig_a);
  b.eig_b = std::move(eig_b);
  return b;
}

std::vector<KfacBlock> make_blocks(const std::vector<KfacFactors>& factors) {
  std::vector<KfacBlock> out;
  out.reserve(factors.size());
  for (const auto& f : factors) out.push_back(KfacBlock::from_factors(f));
  return out;
}

LaplacePosterior build_posterior(std::vector<KfacBlock> blocks, const Vector& mean,
                                 const ParamLayout& layout, Index n_train, double beta) {
  if (n_train < 1) throw ValidationError("build_posterior: n_train must be >= 1");
  if (beta < 0.0) throw ValidationError("build_posterior: beta must be >= 0");
  if (mean.size() != layout.size()) throw ValidationError("build_posterior: mean size mismatch");
  for (const auto& b : blocks) {
    if (b.layer < 0 || b.layer >= layout.num_layers()) {
      throw ValidationError("build_posterior: block layer out of range");
    }
    const auto& wb = layout.weight(b.layer);
    if (b.in_dim() != wb.cols || b.out_dim() != wb.rows) {
      throw ValidationError("build_posterior: block shape mismatch for layer " +
                            std::to_string(b.layer));
    }
    if (beta == 0.0 && (b.eig_a.eigenvalues.minCoeff() <= 0.0 || b.eig_b.eigenvalues.minCoeff() <= 0.0)) {
      throw NumericalError("build_posterior: singular block with beta = 0");
    }
  }
  LaplacePosterior post;
  post.mean = mean;
  post.layout = layout;
  post.blocks = std::move(blocks);
  post.n_train = n_train;
  post.beta = beta;
  return post;
}

namespace {

// out x in matrix C with C(i, j) = 1 / (N (s_a(j) s_b(i) + beta)).
Matrix covariance_grid(const LaplacePosterior& post, const KfacBlock& b) {
  const Vector& sa = b.eig_a.eigenvalues;
  const Vector& sb = b.eig_b.eigenvalues;
  const double n = static_cast<double>(post.n_train);
  Matrix c(sb.size(), sa.size());
  for (Index j = 0; j < sa.size(); ++j) {
    for (Index i = 0; i < sb.size(); ++i) c(i, j) = 1.0 / (n * (sa(j) * sb(i) + post.beta));
  }
  return c;
}

}  // namespace

Vector block_covariance_eigenvalues(const LaplacePosterior& post, std::size_t block) {
  const Matrix c = covariance_grid(post, post.blocks.at(block));
  return Eigen::Map<const Vector>(c.data(), c.size());
}

Vector posterior_variance(const LaplacePosterior& post) {
  Vector var = Vector::Zero(post.layout.size());
  for (const auto& b : post.blocks) {
    const Matrix c = covariance_grid(post, b);
    const Matrix ua2 = b.eig_a.basis.array().square();
    const Matrix ub2 = b.eig_b.basis.array().square();
    const Matrix v = ub2 * c * ua2.transpose();
    const auto& wb = post.layout.weight(b.layer);
    var.segment(wb.offset, wb.size()) = Eigen::Map<const Vector>(v.data(), v.size());
  }
  return var;
}

Vector sample_params(const LaplacePosterior& post, Rng& rng) {
  Vector theta = post.mean;
  for (const auto& b : post.blocks) {
    const Matrix c = covariance_grid(post, b);
    Vector w = standard_normal(rng, c.size());
    w.array() *= Eigen::Map<const Vector>(c.data(), c.size()).array().sqrt();
    const auto& wb = post.layout.weight(b.layer);
    theta.segment(wb.offset, wb.size()) += kron_matvec(b.eig_a.basis, b.eig_b.basis, w);
  }
  return theta;
}

std::vector<KfacBlock> debias_kfac(const std::vector<KfacBlock>& blocks_b,
                                   const std::vector<KfacBlock>& blocks_bt) {
  if (blocks_b.size() != blocks_bt.size()) throw ValidationError("debias_kfac: layer count mismatch");
  std::vector<KfacBlock> out;
  out.reserve(blocks_b.size());
  for (std::size_t l = 0; l < blocks_b.size(); ++l) {
    const auto& b = blocks_b[l];
    const auto& bt = blocks_bt[l];
    if (b.layer != bt.layer) throw ValidationError("debias_kfac: layer order mismatch");
    out.push_back(KfacBlock::from_eigen(b.layer, remeasure(b.eig_a, bt.factor_a),
                                        remeasure(b.eig_b, bt.factor_b)));
  }
  return out;
}

Matrix predictive(const LaplacePosterior& post, const Mlp& model, const Matrix& inputs,
                  const PredictiveConfig& cfg) {
  if (cfg.samples < 1) throw ValidationError("predictive: samples must be >= 1");
  const Matrix logits = model.forward(post.mean, inputs);
  const Rng base(cfg.seed);
  Matrix probs = Matrix::Zero(logits.rows(), logits.cols());
  for (int s = 0; s < cfg.samples; ++s) {
    Rng rng = base.split(static_cast<std::uint64_t>(s));
    const Vector delta = sample_params(post, rng) - post.mean;
    probs += softmax_rows(logits + model.jacobian_vp_batch(post.mean, inputs, delta));
  }
  probs /= static_cast<double>(cfg.samples);
  return probs;
}

std::vector<double> default_prior_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -4.0 + 4.0 * i / 12.0));
  grid.push_back(10.0);
  return grid;
}

}  // namespace mbq

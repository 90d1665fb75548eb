#pragma once

#include <string>
#include <vector>

#include "mbq/linalg.hpp"
#include "mbq/rng.hpp"

namespace mbq {

enum class Activation { relu, tanh, identity };
enum class LossKind { cross_entropy, mse };
// Which parameters the l2 regularizer beta/2 ||theta||^2 acts on.
enum class RegularizerScope { weights_only, all_params };

std::string to_string(Activation a);
std::string to_string(LossKind l);
Activation parse_activation(const std::string& s);
LossKind parse_loss(const std::string& s);

struct MlpArchitecture {
  std::vector<int> layer_sizes;  // D, hidden..., C
  Activation activation = Activation::relu;
  LossKind loss = LossKind::cross_entropy;

  int num_linear_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  void validate() const;
};

enum class ParamRole { weight, bias };

struct ParamBlock {
  int layer = 0;
  ParamRole role = ParamRole::weight;
  int rows = 0;  // weights: out_features; biases: out_features
  int cols = 0;  // weights: in_features; biases: 1
  Index offset = 0;

  Index size() const { return static_cast<Index>(rows) * cols; }
};

/// Flat parameter layout. Per linear layer l: weight W_l (out x in) stored
/// column-major, then bias b_l. Column-major weights make vec(W) the
/// column-stacking vec, so a K-FAC block A kron B acts on it directly.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const MlpArchitecture& arch);

  Index size() const noexcept { return size_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& weight(int layer) const { return blocks_.at(2 * static_cast<std::size_t>(layer)); }
  const ParamBlock& bias(int layer) const { return blocks_.at(2 * static_cast<std::size_t>(layer) + 1); }
  int num_layers() const noexcept { return static_cast<int>(blocks_.size() / 2); }

  /// True exactly for weight entries.
  std::vector<bool> weight_mask() const;
  /// 1.0 on weights, 0.0 on biases.
  Vector weight_mask_vector() const;

  bool operator==(const ParamLayout& other) const;

 private:
  std::vector<ParamBlock> blocks_;
  Index size_ = 0;
};

struct ParamVector {
  ParamLayout layout;
  Vector values;
};

/// Mini-batch: rows are samples. Targets one-hot (each row a single 1).
struct Batch {
  Matrix inputs;   // N_b x D
  Matrix targets;  // N_b x C
  std::vector<Index> indices;
  std::string id;

  Index size() const noexcept { return inputs.rows(); }
  void validate() const;
};

struct Dataset {
  Matrix inputs;            // N x D
  std::vector<int> labels;  // N, in [0, C)
  int num_classes = 0;

  Index size() const noexcept { return inputs.rows(); }
  Index input_dim() const noexcept { return inputs.cols(); }
  Batch subset(const std::vector<Index>& indices, std::string id) const;
  Batch all(std::string id = "FULL") const;
};

Matrix one_hot(const std::vector<int>& labels, int num_classes);

/// Row-wise softmax of an N x C logit matrix.
Matrix softmax_rows(const Matrix& logits);

enum class FisherMode { mc_sample, empirical };

/// Raw Kronecker factors of one dense layer's weight block, K = A kron B.
struct KfacFactors {
  int layer = 0;
  Matrix a;  // in x in
  Matrix b;  // out x out
};

struct LossAndGrad {
  double loss = 0.0;
  Vector gradient;
};

/// Fully connected classifier with exact first and second order products.
/// All batched work keeps samples as columns; reductions run in index order,
/// so results are bitwise reproducible.
class Mlp {
 public:
  explicit Mlp(MlpArchitecture arch, RegularizerScope scope = RegularizerScope::weights_only);

  const MlpArchitecture& architecture() const noexcept { return arch_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  Index num_params() const noexcept { return layout_.size(); }
  RegularizerScope regularizer_scope() const noexcept { return scope_; }
  /// 1.0 where the regularizer acts.
  const Vector& regularizer_mask() const noexcept { return mask_; }

  /// He-style initialization for weights, zero biases.
  Vector init_params(Rng& rng) const;

  Matrix forward(const Vector& theta, const Matrix& inputs) const;

  /// (1/N_b) sum of per-sample losses + beta/2 ||mask * theta||^2, and its gradient.
  LossAndGrad loss_and_grad(const Vector& theta, const Batch& batch, double beta) const;
  double loss(const Vector& theta, const Batch& batch, double beta) const;

  /// Exact Hessian-vector product of the regularized batch loss (R-operator).
  Vector hvp(const Vector& theta, const Batch& batch, double beta, const Vector& v) const;

  /// (G_B + beta * diag(mask)) v with G_B = (1/N_b) sum J^T H_loss J.
  Vector ggn_vp(const Vector& theta, const Batch& batch, double beta, const Vector& v) const;

  /// Directional derivative of the logits at a single input.
  Vector jacobian_vp(const Vector& theta, const Vector& x, const Vector& v) const;
  /// Batched version: row n is J(x_n) v.
  Matrix jacobian_vp_batch(const Vector& theta, const Matrix& inputs, const Vector& v) const;

  /// Per-layer K-FAC factors over the weights. A from layer inputs (no bias
  /// column), B from per-sample loss gradients w.r.t. pre-activations with
  /// targets sampled from the model (mc_sample, one draw per datum) or the
  /// batch labels (empirical).
  std::vector<KfacFactors> kfac_factors(const Vector& theta, const Batch& batch, FisherMode mode,
                                        Rng& rng) const;

  double regularizer(const Vector& theta, double beta) const;

 private:
  struct Cache {
    std::vector<Matrix> z;  // pre-activations, layer 1..L (index 0..L-1)
    std::vector<Matrix> a;  // a[0] = inputs^T, a[l] = sigma(z[l-1])
  };

  void check_theta(const Vector& theta, const char* where) const;
  void check_batch(const Batch& batch, const char* where) const;
  Cache run_forward(const Vector& theta, const Matrix& inputs_t) const;
  // Forward-mode tangent of pre-activations for parameter direction v.
  std::vector<Matrix> tangent_forward(const Vector& theta, const Cache& cache, const Vector& v) const;
  // Per-column loss gradient and loss-Hessian products w.r.t. the logits.
  Matrix loss_gradient(const Matrix& logits, const Matrix& targets_t) const;
  Matrix loss_hessian_product(const Matrix& logits, const Matrix& tangent) const;

  MlpArchitecture arch_;
  ParamLayout layout_;
  RegularizerScope scope_;
  Vector mask_;
};

/// Sample-count weighted average of per-chunk K-FAC factors over consecutive
/// chunks of the dataset, reduced in chunk order. Chunks draw their Fisher
/// targets from rng in order.
std::vector<KfacFactors> accumulate_kfac(const Mlp& model, const Vector& theta,
                                         const Dataset& dataset, FisherMode mode, Rng& rng,
                                         Index chunk_size);

/// Consecutive index ranges [0, n) split into pieces of at most chunk_size.
std::vector<std::vector<Index>> chunk_indices(Index n, Index chunk_size);

}  // namespace mbq

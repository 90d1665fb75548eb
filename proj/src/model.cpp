#include "mbq/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mbq/errors.hpp"

namespace mbq {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

std::string to_string(LossKind l) {
  return l == LossKind::cross_entropy ? "cross_entropy" : "mse";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "mse") return LossKind::mse;
  throw ValidationError("unknown loss '" + s + "'");
}

void MlpArchitecture::validate() const {
  if (layer_sizes.size() < 2) throw ValidationError("architecture needs at least one linear layer");
  for (int s : layer_sizes) {
    if (s <= 0) throw ValidationError("layer sizes must be positive");
  }
}

ParamLayout::ParamLayout(const MlpArchitecture& arch) {
  arch.validate();
  Index offset = 0;
  for (int l = 0; l < arch.num_linear_layers(); ++l) {
    const int in = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
    blocks_.push_back({l, ParamRole::weight, out, in, offset});
    offset += static_cast<Index>(out) * in;
    blocks_.push_back({l, ParamRole::bias, out, 1, offset});
    offset += out;
  }
  size_ = offset;
}

std::vector<bool> ParamLayout::weight_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(size_), false);
  for (const auto& b : blocks_) {
    if (b.role != ParamRole::weight) continue;
    for (Index i = 0; i < b.size(); ++i) mask[static_cast<std::size_t>(b.offset + i)] = true;
  }
  return mask;
}

Vector ParamLayout::weight_mask_vector() const {
  Vector mask = Vector::Zero(size_);
  for (const auto& b : blocks_) {
    if (b.role == ParamRole::weight) mask.segment(b.offset, b.size()).setOnes();
  }
  return mask;
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (size_ != other.size_ || blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& x = blocks_[i];
    const auto& y = other.blocks_[i];
    if (x.layer != y.layer || x.role != y.role || x.rows != y.rows || x.cols != y.cols ||
        x.offset != y.offset) {
      return false;
    }
  }
  return true;
}

void Batch::validate() const {
  if (targets.rows() != inputs.rows()) throw ValidationError("batch: inputs/targets row mismatch");
  for (Index n = 0; n < targets.rows(); ++n) {
    int ones = 0;
    for (Index c = 0; c < targets.cols(); ++c) {
      const double t = targets(n, c);
      if (t == 1.0) {
        ++ones;
      } else if (t != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) {
      throw ValidationError("batch: target row " + std::to_string(n) + " is not one-hot");
    }
  }
}

Matrix one_hot(const std::vector<int>& labels, int num_classes) {
  Matrix t = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || labels[n] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[n]) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    t(static_cast<Index>(n), labels[n]) = 1.0;
  }
  return t;
}

Batch Dataset::subset(const std::vector<Index>& indices, std::string id) const {
  Batch b;
  b.inputs.resize(static_cast<Index>(indices.size()), inputs.cols());
  b.targets = Matrix::Zero(static_cast<Index>(indices.size()), num_classes);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index src = indices[i];
    if (src < 0 || src >= size()) throw ValidationError("batch index out of range");
    b.inputs.row(static_cast<Index>(i)) = inputs.row(src);
    b.targets(static_cast<Index>(i), labels[static_cast<std::size_t>(src)]) = 1.0;
  }
  b.indices = indices;
  b.id = std::move(id);
  return b;
}

Batch Dataset::all(std::string id) const {
  std::vector<Index> idx(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  return subset(idx, std::move(id));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index n = 0; n < logits.rows(); ++n) {
    const double m = logits.row(n).maxCoeff();
    p.row(n) = (logits.row(n).array() - m).exp();
    p.row(n) /= p.row(n).sum();
  }
  return p;
}

namespace {

using Map = Eigen::Map<const Matrix>;
using VMap = Eigen::Map<const Vector>;

Matrix act(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::identity: return z;
  }
  return z;
}

// Relu derivative at exactly 0 is taken as 0.
Matrix dact(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::identity: return Matrix::Ones(z.rows(), z.cols());
  }
  return z;
}

Matrix d2act(Activation a, const Matrix& z) {
  if (a == Activation::tanh) {
    const auto t = z.array().tanh();
    return (-2.0 * t * (1.0 - t.square())).matrix();
  }
  return Matrix::Zero(z.rows(), z.cols());
}

// Columns are samples.
Matrix softmax_cols(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index n = 0; n < logits.cols(); ++n) {
    const double m = logits.col(n).maxCoeff();
    p.col(n) = (logits.col(n).array() - m).exp();
    p.col(n) /= p.col(n).sum();
  }
  return p;
}

}  // namespace

Mlp::Mlp(MlpArchitecture arch, RegularizerScope scope)
    : arch_(std::move(arch)), layout_(arch_), scope_(scope) {
  mask_ = scope_ == RegularizerScope::weights_only ? layout_.weight_mask_vector()
                                                    : Vector::Ones(layout_.size());
}

Vector Mlp::init_params(Rng& rng) const {
  Vector theta = Vector::Zero(layout_.size());
  for (const auto& b : layout_.blocks()) {
    if (b.role != ParamRole::weight) continue;
    const double gain = arch_.activation == Activation::relu ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / b.cols);
    for (Index i = 0; i < b.size(); ++i) theta(b.offset + i) = stddev * rng.normal();
  }
  return theta;
}

void Mlp::check_theta(const Vector& theta, const char* where) const {
  if (theta.size() != layout_.size()) {
    std::ostringstream msg;
    msg << where << ": parameter vector has " << theta.size() << " entries, expected "
        << layout_.size();
    throw ValidationError(msg.str());
  }
}

void Mlp::check_batch(const Batch& batch, const char* where) const {
  if (batch.inputs.cols() != arch_.input_dim() || batch.targets.cols() != arch_.output_dim() ||
      batch.targets.rows() != batch.inputs.rows()) {
    std::ostringstream msg;
    msg << where << ": batch shape " << batch.inputs.rows() << "x" << batch.inputs.cols()
        << " / targets " << batch.targets.rows() << "x" << batch.targets.cols()
        << " incompatible with architecture";
    throw ValidationError(msg.str());
  }
  if (batch.size() == 0) throw ValidationError(std::string(where) + ": empty batch");
}

Mlp::Cache Mlp::run_forward(const Vector& theta, const Matrix& inputs_t) const {
  const int L = arch_.num_linear_layers();
  Cache c;
  c.a.reserve(static_cast<std::size_t>(L));
  c.z.reserve(static_cast<std::size_t>(L));
  c.a.push_back(inputs_t);
  for (int l = 0; l < L; ++l) {
    const auto& wb = layout_.weight(l);
    const auto& bb = layout_.bias(l);
    const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
    const VMap b(theta.data() + bb.offset, bb.rows);
    Matrix z = w * c.a.back();
    z.colwise() += b;
    if (l + 1 < L) c.a.push_back(act(arch_.activation, z));
    c.z.push_back(std::move(z));
  }
  return c;
}

std::vector<Matrix> Mlp::tangent_forward(const Vector& theta, const Cache& cache,
                                         const Vector& v) const {
  const int L = arch_.num_linear_layers();
  std::vector<Matrix> rz;
  rz.reserve(static_cast<std::size_t>(L));
  Matrix ra = Matrix::Zero(cache.a[0].rows(), cache.a[0].cols());
  for (int l = 0; l < L; ++l) {
    const auto& wb = layout_.weight(l);
    const auto& bb = layout_.bias(l);
    const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
    const Map vw(v.data() + wb.offset, wb.rows, wb.cols);
    const VMap vb(v.data() + bb.offset, bb.rows);
    const auto& a = cache.a[static_cast<std::size_t>(l)];
    Matrix r = vw * a;
    if (l > 0) r.noalias() += w * ra;
    r.colwise() += vb;
    if (l + 1 < L) ra = dact(arch_.activation, cache.z[static_cast<std::size_t>(l)]).cwiseProduct(r);
    rz.push_back(std::move(r));
  }
  return rz;
}

Matrix Mlp::loss_gradient(const Matrix& logits, const Matrix& targets_t) const {
  if (arch_.loss == LossKind::cross_entropy) return softmax_cols(logits) - targets_t;
  return 2.0 * (logits - targets_t);
}

Matrix Mlp::loss_hessian_product(const Matrix& logits, const Matrix& tangent) const {
  if (arch_.loss == LossKind::mse) return 2.0 * tangent;
  const Matrix p = softmax_cols(logits);
  Matrix out = p.cwiseProduct(tangent);
  for (Index n = 0; n < p.cols(); ++n) out.col(n) -= p.col(n) * p.col(n).dot(tangent.col(n));
  return out;
}

Matrix Mlp::forward(const Vector& theta, const Matrix& inputs) const {
  check_theta(theta, "forward");
  if (inputs.cols() != arch_.input_dim()) {
    throw ValidationError("forward: input width " + std::to_string(inputs.cols()) + " != " +
                          std::to_string(arch_.input_dim()));
  }
  return run_forward(theta, inputs.transpose()).z.back().transpose();
}

double Mlp::regularizer(const Vector& theta, double beta) const {
  return 0.5 * beta * theta.cwiseProduct(mask_).squaredNorm();
}

double Mlp::loss(const Vector& theta, const Batch& batch, double beta) const {
  check_theta(theta, "loss");
  check_batch(batch, "loss");
  const Matrix logits = run_forward(theta, batch.inputs.transpose()).z.back();
  const Matrix targets_t = batch.targets.transpose();
  double total = 0.0;
  for (Index n = 0; n < logits.cols(); ++n) {
    if (arch_.loss == LossKind::cross_entropy) {
      const double m = logits.col(n).maxCoeff();
      const double lse = m + std::log((logits.col(n).array() - m).exp().sum());
      total += lse * targets_t.col(n).sum() - logits.col(n).dot(targets_t.col(n));
    } else {
      total += (logits.col(n) - targets_t.col(n)).squaredNorm();
    }
  }
  return total / static_cast<double>(batch.size()) + regularizer(theta, beta);
}

LossAndGrad Mlp::loss_and_grad(const Vector& theta, const Batch& batch, double beta) const {
  check_theta(theta, "loss_and_grad");
  check_batch(batch, "loss_and_grad");
  const int L = arch_.num_linear_layers();
  const Cache cache = run_forward(theta, batch.inputs.transpose());
  const Matrix targets_t = batch.targets.transpose();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossAndGrad out;
  out.loss = loss(theta, batch, beta);
  out.gradient = Vector::Zero(layout_.size());

  Matrix delta = loss_gradient(cache.z.back(), targets_t) * inv_n;
  for (int l = L - 1; l >= 0; --l) {
    const auto& wb = layout_.weight(l);
    const auto& bb = layout_.bias(l);
    Eigen::Map<Matrix> gw(out.gradient.data() + wb.offset, wb.rows, wb.cols);
    gw.noalias() += delta * cache.a[static_cast<std::size_t>(l)].transpose();
    out.gradient.segment(bb.offset, bb.rows) += delta.rowwise().sum();
    if (l > 0) {
      const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
      delta = dact(arch_.activation, cache.z[static_cast<std::size_t>(l) - 1])
                  .cwiseProduct(w.transpose() * delta);
    }
  }
  if (beta != 0.0) out.gradient += beta * mask_.cwiseProduct(theta);
  return out;
}

Vector Mlp::hvp(const Vector& theta, const Batch& batch, double beta, const Vector& v) const {
  check_theta(theta, "hvp");
  check_theta(v, "hvp");
  check_batch(batch, "hvp");
  const int L = arch_.num_linear_layers();
  const Cache cache = run_forward(theta, batch.inputs.transpose());
  const std::vector<Matrix> rz = tangent_forward(theta, cache, v);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  // Tangents of the layer inputs; ra[0] = 0 since inputs do not depend on theta.
  std::vector<Matrix> ra(static_cast<std::size_t>(L));
  ra[0] = Matrix::Zero(cache.a[0].rows(), cache.a[0].cols());
  for (int l = 1; l < L; ++l) {
    ra[static_cast<std::size_t>(l)] =
        dact(arch_.activation, cache.z[static_cast<std::size_t>(l) - 1])
            .cwiseProduct(rz[static_cast<std::size_t>(l) - 1]);
  }

  Vector out = Vector::Zero(layout_.size());
  Matrix delta = loss_gradient(cache.z.back(), batch.targets.transpose()) * inv_n;
  Matrix rdelta = loss_hessian_product(cache.z.back(), rz.back()) * inv_n;
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const auto& wb = layout_.weight(l);
    const auto& bb = layout_.bias(l);
    Eigen::Map<Matrix> hw(out.data() + wb.offset, wb.rows, wb.cols);
    hw.noalias() += rdelta * cache.a[li].transpose();
    if (l > 0) hw.noalias() += delta * ra[li].transpose();
    out.segment(bb.offset, bb.rows) += rdelta.rowwise().sum();
    if (l > 0) {
      const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
      const Map vw(v.data() + wb.offset, wb.rows, wb.cols);
      const Matrix g = w.transpose() * delta;
      Matrix rg = vw.transpose() * delta;
      rg.noalias() += w.transpose() * rdelta;
      const Matrix& zprev = cache.z[li - 1];
      const Matrix d1 = dact(arch_.activation, zprev);
      rdelta = d1.cwiseProduct(rg);
      if (arch_.activation == Activation::tanh) {
        rdelta += d2act(arch_.activation, zprev).cwiseProduct(rz[li - 1]).cwiseProduct(g);
      }
      delta = d1.cwiseProduct(g);
    }
  }
  if (beta != 0.0) out += beta * mask_.cwiseProduct(v);
  return out;
}

Vector Mlp::ggn_vp(const Vector& theta, const Batch& batch, double beta, const Vector& v) const {
  check_theta(theta, "ggn_vp");
  check_theta(v, "ggn_vp");
  check_batch(batch, "ggn_vp");
  const int L = arch_.num_linear_layers();
  const Cache cache = run_forward(theta, batch.inputs.transpose());
  const std::vector<Matrix> rz = tangent_forward(theta, cache, v);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Vector out = Vector::Zero(layout_.size());
  Matrix back = loss_hessian_product(cache.z.back(), rz.back()) * inv_n;
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const auto& wb = layout_.weight(l);
    const auto& bb = layout_.bias(l);
    Eigen::Map<Matrix> gw(out.data() + wb.offset, wb.rows, wb.cols);
    gw.noalias() += back * cache.a[li].transpose();
    out.segment(bb.offset, bb.rows) += back.rowwise().sum();
    if (l > 0) {
      const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
      back = dact(arch_.activation, cache.z[li - 1]).cwiseProduct(w.transpose() * back);
    }
  }
  if (beta != 0.0) out += beta * mask_.cwiseProduct(v);
  return out;
}

Vector Mlp::jacobian_vp(const Vector& theta, const Vector& x, const Vector& v) const {
  Matrix inputs(1, x.size());
  inputs.row(0) = x.transpose();
  return jacobian_vp_batch(theta, inputs, v).row(0).transpose();
}

Matrix Mlp::jacobian_vp_batch(const Vector& theta, const Matrix& inputs, const Vector& v) const {
  check_theta(theta, "jacobian_vp");
  check_theta(v, "jacobian_vp");
  if (inputs.cols() != arch_.input_dim()) throw ValidationError("jacobian_vp: input width mismatch");
  const Cache cache = run_forward(theta, inputs.transpose());
  return tangent_forward(theta, cache, v).back().transpose();
}

std::vector<KfacFactors> Mlp::kfac_factors(const Vector& theta, const Batch& batch, FisherMode mode,
                                           Rng& rng) const {
  check_theta(theta, "kfac_factors");
  check_batch(batch, "kfac_factors");
  const int L = arch_.num_linear_layers();
  const Cache cache = run_forward(theta, batch.inputs.transpose());
  const Matrix& logits = cache.z.back();
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Matrix g;  // per-sample d loss / d logits, columns are samples
  if (mode == FisherMode::empirical) {
    g = loss_gradient(logits, batch.targets.transpose());
  } else if (arch_.loss == LossKind::cross_entropy) {
    const Matrix p = softmax_cols(logits);
    Matrix sampled = Matrix::Zero(p.rows(), p.cols());
    for (Index n = 0; n < p.cols(); ++n) {
      const double u = rng.uniform();
      double cum = 0.0;
      Index cls = p.rows() - 1;
      for (Index c = 0; c < p.rows(); ++c) {
        cum += p(c, n);
        if (u < cum) {
          cls = c;
          break;
        }
      }
      sampled(cls, n) = 1.0;
    }
    g = p - sampled;
  } else {
    // Squared error is the Gaussian likelihood with variance 1/2 per output.
    g.resize(logits.rows(), logits.cols());
    for (Index n = 0; n < g.cols(); ++n) {
      for (Index c = 0; c < g.rows(); ++c) g(c, n) = -std::sqrt(2.0) * rng.normal();
    }
  }

  std::vector<KfacFactors> out(static_cast<std::size_t>(L));
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Matrix& a = cache.a[li];
    Matrix fa = a * a.transpose() * inv_n;
    Matrix fb = g * g.transpose() * inv_n;
    out[li].layer = l;
    out[li].a = 0.5 * (fa + fa.transpose());
    out[li].b = 0.5 * (fb + fb.transpose());
    if (l > 0) {
      const auto& wb = layout_.weight(l);
      const Map w(theta.data() + wb.offset, wb.rows, wb.cols);
      g = dact(arch_.activation, cache.z[li - 1]).cwiseProduct(w.transpose() * g);
    }
  }
  return out;
}

}  // namespace mbq

namespace mbq {

std::vector<std::vector<Index>> chunk_indices(Index n, Index chunk_size) {
  if (chunk_size < 1) throw ValidationError("chunk_size must be >= 1");
  std::vector<std::vector<Index>> chunks;
  for (Index start = 0; start < n; start += chunk_size) {
    const Index end = std::min(n, start + chunk_size);
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(end - start));
    for (Index i = start; i < end; ++i) idx.push_back(i);
    chunks.push_back(std::move(idx));
  }
  return chunks;
}

std::vector<KfacFactors> accumulate_kfac(const Mlp& model, const Vector& theta,
                                         const Dataset& dataset, FisherMode mode, Rng& rng,
                                         Index chunk_size) {
  if (dataset.size() == 0) throw ValidationError("accumulate_kfac: empty dataset");
  const auto chunks = chunk_indices(dataset.size(), chunk_size);
  const double n = static_cast<double>(dataset.size());
  std::vector<KfacFactors> total;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const Batch chunk = dataset.subset(chunks[c], "chunk" + std::to_string(c));
    auto part = model.kfac_factors(theta, chunk, mode, rng);
    if (chunks.size() == 1) return part;
    const double w = static_cast<double>(chunk.size()) / n;
    if (total.empty()) {
      total = part;
      for (auto& f : total) {
        f.a *= w;
        f.b *= w;
      }
      continue;
    }
    for (std::size_t l = 0; l < part.size(); ++l) {
      total[l].a += w * part[l].a;
      total[l].b += w * part[l].b;
    }
  }
  return total;
}

}  // namespace mbq

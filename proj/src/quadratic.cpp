#include "mbq/quadratic.hpp"

#include <cmath>
#include <sstream>

#include "mbq/errors.hpp"

namespace mbq {

std::string to_string(CurvatureKind k) {
  switch (k) {
    case CurvatureKind::hessian: return "hessian";
    case CurvatureKind::ggn: return "ggn";
    case CurvatureKind::kfac: return "kfac";
  }
  return "?";
}

CurvatureKind parse_curvature_kind(const std::string& s) {
  if (s == "hessian") return CurvatureKind::hessian;
  if (s == "ggn") return CurvatureKind::ggn;
  if (s == "kfac") return CurvatureKind::kfac;
  throw ValidationError("unknown curvature kind '" + s + "'");
}

CurvatureOperator::CurvatureOperator(CurvatureKind kind, LinearOperator raw, Vector mask,
                                     double beta, double delta)
    : kind_(kind), raw_(std::move(raw)), mask_(std::move(mask)), beta_(beta), delta_(delta) {
  if (beta < 0.0 || delta < 0.0) throw ValidationError("beta and delta must be nonnegative");
}

CurvatureOperator CurvatureOperator::dense(const Matrix& h, double delta) {
  const DenseSymMatrix checked(h);
  auto m = std::make_shared<const Matrix>(checked.matrix());
  return CurvatureOperator(
      CurvatureKind::hessian, [m](const Vector& v) -> Vector { return *m * v; },
      Vector::Zero(h.rows()), 0.0, delta);
}

CurvatureOperator CurvatureOperator::kfac(const ParamLayout& layout,
                                          std::vector<KfacFactors> factors, Vector mask,
                                          double beta, double delta) {
  if (factors.empty()) throw ValidationError("kfac curvature needs at least one dense layer");
  if (static_cast<int>(factors.size()) != layout.num_layers()) {
    throw ValidationError("kfac factor count does not match the layout");
  }
  for (const auto& f : factors) {
    const auto& wb = layout.weight(f.layer);
    if (f.a.rows() != wb.cols || f.b.rows() != wb.rows) {
      throw ValidationError("kfac factor shape does not match layer " + std::to_string(f.layer));
    }
  }
  auto shared = std::make_shared<const std::vector<KfacFactors>>(factors);
  auto raw = [shared, layout](const Vector& v) -> Vector {
    Vector out = Vector::Zero(v.size());
    for (const auto& f : *shared) {
      const auto& wb = layout.weight(f.layer);
      const Eigen::Map<const Matrix> w(v.data() + wb.offset, wb.rows, wb.cols);
      Eigen::Map<Matrix> o(out.data() + wb.offset, wb.rows, wb.cols);
      o.noalias() = f.b * w * f.a;
    }
    return out;
  };
  CurvatureOperator op(CurvatureKind::kfac, raw, std::move(mask), beta, delta);
  op.factors_ = std::move(factors);
  return op;
}

Vector CurvatureOperator::apply(const Vector& v) const {
  if (v.size() != dim()) {
    throw ValidationError("curvature matvec: vector has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(dim()));
  }
  counter_->fetch_add(1);
  Vector out = raw_(v);
  if (beta_ != 0.0) out += beta_ * mask_.cwiseProduct(v);
  if (delta_ != 0.0) out += delta_ * v;
  return out;
}

LinearOperator CurvatureOperator::as_function() const {
  CurvatureOperator self = *this;
  return [self](const Vector& v) { return self.apply(v); };
}

namespace {

LinearOperator raw_curvature(const Mlp& model, const Vector& theta0,
                             std::shared_ptr<const std::vector<Batch>> chunks,
                             std::vector<double> weights, CurvatureKind kind) {
  return [model, theta0, chunks, weights, kind](const Vector& v) -> Vector {
    Vector out;
    for (std::size_t c = 0; c < chunks->size(); ++c) {
      const Batch& b = (*chunks)[c];
      Vector part = kind == CurvatureKind::hessian ? model.hvp(theta0, b, 0.0, v)
                                                   : model.ggn_vp(theta0, b, 0.0, v);
      if (c == 0) {
        out = weights[c] * part;
      } else {
        out += weights[c] * part;
      }
    }
    return out;
  };
}

QuadraticModel assemble(const Mlp& model, const Vector& theta0, std::vector<Batch> chunks,
                        std::vector<KfacFactors> factors, CurvatureKind kind, double beta,
                        double delta, std::string id) {
  Index total = 0;
  for (const auto& b : chunks) total += b.size();
  std::vector<double> weights;
  for (const auto& b : chunks) {
    weights.push_back(chunks.size() == 1 ? 1.0
                                         : static_cast<double>(b.size()) / static_cast<double>(total));
  }

  QuadraticModel q;
  q.anchor = theta0;
  q.batch_id = std::move(id);
  double c = 0.0;
  Vector g = Vector::Zero(theta0.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const LossAndGrad lg = model.loss_and_grad(theta0, chunks[i], 0.0);
    if (i == 0) {
      c = weights[i] * lg.loss;
      g = weights[i] * lg.gradient;
    } else {
      c += weights[i] * lg.loss;
      g += weights[i] * lg.gradient;
    }
  }
  q.constant = c + model.regularizer(theta0, beta);
  if (beta != 0.0) g += beta * model.regularizer_mask().cwiseProduct(theta0);
  q.gradient = std::move(g);

  if (kind == CurvatureKind::kfac) {
    q.curvature = CurvatureOperator::kfac(model.layout(), std::move(factors),
                                          model.regularizer_mask(), beta, delta);
  } else {
    auto shared = std::make_shared<const std::vector<Batch>>(std::move(chunks));
    q.curvature = CurvatureOperator(kind, raw_curvature(model, theta0, shared, weights, kind),
                                    model.regularizer_mask(), beta, delta);
  }
  return q;
}

}  // namespace

QuadraticModel build_quadratic(const Mlp& model, const Vector& theta0, const Batch& batch,
                               CurvatureKind kind, double beta, double delta,
                               const KfacOptions& kfac) {
  if (theta0.size() != model.num_params()) throw ValidationError("build_quadratic: theta size");
  std::vector<KfacFactors> factors;
  if (kind == CurvatureKind::kfac) {
    Rng rng(kfac.seed);
    factors = model.kfac_factors(theta0, batch, kfac.mode, rng);
  }
  return assemble(model, theta0, {batch}, std::move(factors), kind, beta, delta, batch.id);
}

QuadraticModel fullbatch_quadratic(const Mlp& model, const Vector& theta0, const Dataset& dataset,
                                   CurvatureKind kind, double beta, double delta, Index chunk_size,
                                   const KfacOptions& kfac, std::string id) {
  if (dataset.size() == 0) throw ValidationError("fullbatch_quadratic: empty dataset");
  std::vector<Batch> chunks;
  const auto idx = chunk_indices(dataset.size(), chunk_size);
  for (std::size_t c = 0; c < idx.size(); ++c) {
    chunks.push_back(dataset.subset(idx[c], id + "#" + std::to_string(c)));
  }
  std::vector<KfacFactors> factors;
  if (kind == CurvatureKind::kfac) {
    Rng rng(kfac.seed);
    factors = accumulate_kfac(model, theta0, dataset, kfac.mode, rng, chunk_size);
  }
  return assemble(model, theta0, std::move(chunks), std::move(factors), kind, beta, delta,
                  std::move(id));
}

Vector grad_at(const QuadraticModel& q, const Vector& theta) {
  if (theta.size() != q.dim()) throw ValidationError("grad_at: dimension mismatch");
  const Vector x = theta - q.anchor;
  if (x.isZero(0.0)) return q.gradient;
  return q.curvature.apply(x) + q.gradient;
}

double value(const QuadraticModel& q, const Vector& theta) {
  if (theta.size() != q.dim()) throw ValidationError("value: dimension mismatch");
  const Vector x = theta - q.anchor;
  if (x.isZero(0.0)) return q.constant;
  return 0.5 * x.dot(q.curvature.apply(x)) + x.dot(q.gradient) + q.constant;
}

void check_direction(const Vector& d, Index dim) {
  if (d.size() != dim) throw ValidationError("direction has wrong dimension");
  const double n = d.norm();
  if (!(std::abs(n - 1.0) <= 1e-12)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "direction is not unit norm (norm " << n << ")";
    throw ValidationError(msg.str());
  }
}

double directional_slope(const QuadraticModel& q, const Vector& theta, const Vector& d) {
  check_direction(d, q.dim());
  return d.dot(grad_at(q, theta));
}

double directional_curvature(const QuadraticModel& q, const Vector& d) {
  check_direction(d, q.dim());
  return d.dot(q.curvature.apply(d));
}

std::vector<double> subspace_eval(const QuadraticModel& q, const Vector& theta_star,
                                  const Vector& u1, const Vector& u2,
                                  const std::vector<SubspacePoint>& grid) {
  if (theta_star.size() != q.dim() || u1.size() != q.dim() || u2.size() != q.dim()) {
    throw ValidationError("subspace_eval: dimension mismatch");
  }
  constexpr double tol = 1e-8;
  if (std::abs(u1.norm() - 1.0) > tol || std::abs(u2.norm() - 1.0) > tol ||
      std::abs(u1.dot(u2)) > tol) {
    throw ValidationError("subspace_eval: u1, u2 are not orthonormal within 1e-8");
  }
  const Vector hu1 = q.curvature.apply(u1);
  const Vector hu2 = q.curvature.apply(u2);
  const double h11 = u1.dot(hu1);
  const double h12 = u1.dot(hu2);
  const double h22 = u2.dot(hu2);
  // Gradient and value at theta_star; H x0 is only needed off the anchor.
  const Vector x0 = theta_star - q.anchor;
  double g1 = u1.dot(q.gradient);
  double g2 = u2.dot(q.gradient);
  double c = q.constant;
  if (!x0.isZero(0.0)) {
    const Vector hx = q.curvature.apply(x0);
    g1 += u1.dot(hx);
    g2 += u2.dot(hx);
    c += 0.5 * x0.dot(hx) + x0.dot(q.gradient);
  }
  std::vector<double> out;
  out.reserve(grid.size());
  for (const auto& p : grid) {
    out.push_back(c + p.tau1 * g1 + p.tau2 * g2 +
                  0.5 * (p.tau1 * p.tau1 * h11 + 2.0 * p.tau1 * p.tau2 * h12 + p.tau2 * p.tau2 * h22));
  }
  return out;
}

}  // namespace mbq

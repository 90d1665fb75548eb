#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "mbq/linalg.hpp"
#include "mbq/model.hpp"

namespace mbq {

enum class CurvatureKind { hessian, ggn, kfac };

std::string to_string(CurvatureKind k);
CurvatureKind parse_curvature_kind(const std::string& s);

struct KfacOptions {
  FisherMode mode = FisherMode::mc_sample;
  std::uint64_t seed = 0;
};

/// v -> (C + beta * diag(mask) + delta * I) v for a curvature C. Copies share
/// one matvec counter.
class CurvatureOperator {
 public:
  CurvatureOperator() = default;
  CurvatureOperator(CurvatureKind kind, LinearOperator raw, Vector mask, double beta, double delta);

  /// Dense symmetric curvature with no regularizer mask, for synthetic problems.
  static CurvatureOperator dense(const Matrix& h, double delta = 0.0);
  /// blockdiag(A_l kron B_l) on the weights of layout, zero on biases.
  static CurvatureOperator kfac(const ParamLayout& layout, std::vector<KfacFactors> factors,
                                Vector mask, double beta, double delta);

  Vector apply(const Vector& v) const;
  Vector operator()(const Vector& v) const { return apply(v); }
  LinearOperator as_function() const;

  CurvatureKind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  double delta() const noexcept { return delta_; }
  Index dim() const noexcept { return mask_.size(); }
  const Vector& mask() const noexcept { return mask_; }
  long long matvec_count() const noexcept { return counter_ ? counter_->load() : 0; }
  /// K-FAC factors backing a kfac operator, empty otherwise.
  const std::vector<KfacFactors>& kfac_factors() const noexcept { return factors_; }

 private:
  CurvatureKind kind_ = CurvatureKind::ggn;
  LinearOperator raw_;
  Vector mask_;
  double beta_ = 0.0;
  double delta_ = 0.0;
  std::vector<KfacFactors> factors_;
  std::shared_ptr<std::atomic<long long>> counter_ = std::make_shared<std::atomic<long long>>(0);
};

/// q(theta) = 1/2 x^T H x + x^T g + c with x = theta - anchor.
struct QuadraticModel {
  Vector anchor;
  double constant = 0.0;
  Vector gradient;
  CurvatureOperator curvature;
  std::string batch_id;

  Index dim() const noexcept { return anchor.size(); }
};

QuadraticModel build_quadratic(const Mlp& model, const Vector& theta0, const Batch& batch,
                               CurvatureKind kind, double beta, double delta,
                               const KfacOptions& kfac = {});

/// Same quadratic over a whole dataset, streaming consecutive chunks and
/// weighting each by its share of samples. For kfac the factors themselves are
/// averaged, which is not the K-FAC of the union.
QuadraticModel fullbatch_quadratic(const Mlp& model, const Vector& theta0, const Dataset& dataset,
                                   CurvatureKind kind, double beta, double delta, Index chunk_size,
                                   const KfacOptions& kfac = {}, std::string id = "FULL");

/// H (theta - anchor) + g. At the anchor no matvec is spent.
Vector grad_at(const QuadraticModel& q, const Vector& theta);
double value(const QuadraticModel& q, const Vector& theta);

/// Throws unless |‖d‖ - 1| <= 1e-12.
void check_direction(const Vector& d, Index dim);
double directional_slope(const QuadraticModel& q, const Vector& theta, const Vector& d);
double directional_curvature(const QuadraticModel& q, const Vector& d);

struct SubspacePoint {
  double tau1 = 0.0;
  double tau2 = 0.0;
};

/// q(theta_star + tau1 u1 + tau2 u2) over a grid via the six projected
/// scalars. Costs 2 matvecs when theta_star is the anchor, 3 otherwise.
std::vector<double> subspace_eval(const QuadraticModel& q, const Vector& theta_star,
                                  const Vector& u1, const Vector& u2,
                                  const std::vector<SubspacePoint>& grid);

}  // namespace mbq

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbq/cg.hpp"
#include "mbq/linalg.hpp"
#include "mbq/model.hpp"
#include "mbq/quadratic.hpp"

namespace mbq {

enum class DirectionKind { eigen, cg };

struct DirectionSet {
  DirectionKind kind = DirectionKind::eigen;
  std::string source_batch;
  std::vector<Vector> directions;
  std::vector<double> eigenvalues;  // eigen kind
  std::vector<Vector> anchors;      // cg kind: theta_p paired with d_p

  std::size_t size() const noexcept { return directions.size(); }
};

/// Slopes and curvatures of several quadratics along a set of directions.
/// Matrices are directions x evaluation batches.
struct ScanReport {
  std::string source_batch;
  std::vector<std::string> batch_ids;
  Matrix slopes;
  Matrix curvatures;
  Vector full_slopes;
  Vector full_curvatures;
  // Column of batch_ids equal to source_batch, if any.
  std::optional<Index> same_batch_column;
  // CG scans: trace step lengths and whether the trace stopped early.
  std::vector<double> trace_magnitudes;
  std::optional<Termination> termination;
  // Display view only: applied sign per direction and display order.
  std::vector<double> display_sign;
  std::vector<Index> display_order;

  Index num_directions() const noexcept { return slopes.rows(); }
  Index num_batches() const noexcept { return slopes.cols(); }
  /// -slope / curvature, the 1D Newton step along each direction.
  Matrix magnitudes() const;
  Vector full_magnitudes() const;
  Vector same_batch_slopes() const;
  Vector same_batch_curvatures() const;
};

struct ScanSettings {
  CurvatureKind kind = CurvatureKind::ggn;
  double beta = 0.0;
  double delta = 0.0;
  Index k = 10;
  Index chunk_size = 512;
  KfacOptions kfac;
  std::uint64_t seed = 0;
  TopKOptions topk;
};

struct EigenScan {
  DirectionSet directions;
  ScanReport report;
};

/// For each source batch: top-k eigenvectors of its curvature, then slope
/// and curvature at theta of every batch's quadratic and of the full-batch
/// quadratic along them.
std::vector<EigenScan> eigendirection_scan(const Mlp& model, const Vector& theta,
                                           const std::vector<Batch>& batches,
                                           const Dataset& dataset, const ScanSettings& settings);

/// Same evaluation for prebuilt quadratics, all anchored at theta.
EigenScan eigendirection_scan(const QuadraticModel& source, const std::vector<QuadraticModel>& batches,
                              const QuadraticModel& full, Index k, Rng& rng,
                              const TopKOptions& topk = {});

/// Runs K CG steps on q_b and evaluates every quadratic along d_p at theta_p.
EigenScan cg_direction_scan(const QuadraticModel& q_b, const std::vector<QuadraticModel>& batches,
                            const QuadraticModel& full, int K, const CgConfig& config);

/// Flips directions so same-batch slopes are >= 0 and orders them by
/// descending same-batch slope; fills display_sign / display_order and
/// returns the transformed copy. Stored data is left untouched.
ScanReport display_normalized(const ScanReport& report);

struct OverlapMatrix {
  Matrix omega;  // omega(i, p) = (u_i . u~_p)^2
  std::string batch_u;
  std::string batch_v;
  Vector captured_mass;  // row sums
};

OverlapMatrix overlap_matrix(const DirectionSet& u, const DirectionSet& v);
OverlapMatrix overlap_matrix(const EigenDecomposition& u, const EigenDecomposition& v);

/// Display scale: 0 (black) at omega <= 1e-8, 1 (white) at 1, log in between.
double overlap_gray(double omega);

/// sum_p lambda~_p Omega(i, p) for every i: the curvature of u_i under the
/// other matrix.
Vector spectral_transfer(const EigenDecomposition& eig_b, const EigenDecomposition& eig_bt,
                         const OverlapMatrix& omega);

struct SlopeBias {
  double slope_b = 0.0;
  double slope_bt = 0.0;
  double alpha = 0.0;  // angle between the two gradients
  double grad_norm_b = 0.0;
  double grad_norm_bt = 0.0;
  // slope_bt + grad_b . grad_bt / ‖grad_b‖, zero up to rounding.
  double projection_residual = 0.0;
  // (slope_bt - slope_b) - ‖grad_b‖ (1 - cos alpha); only meaningful when the
  // norms agree.
  double equal_norm_residual = 0.0;
};

/// Slopes of both quadratics along the steepest descent direction of q_b at theta.
SlopeBias slope_bias(const QuadraticModel& q_b, const QuadraticModel& q_bt, const Vector& theta);

enum class BiasQuantity { slope, curvature };

struct BiasMetadata {
  Index batch_size = 0;
  Index num_params = 0;
  double epoch = 0.0;
  std::string label;
};

struct BiasSummary {
  BiasMetadata meta;
  BiasQuantity quantity = BiasQuantity::curvature;
  std::vector<double> errors;
  double mean = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  int excluded = 0;  // directions with |full| < 1e-14
};

/// Relative errors |measured - truth| / |truth| and their summary.
BiasSummary summarize_errors(const std::vector<double>& measured, const std::vector<double>& truth,
                             BiasQuantity quantity = BiasQuantity::curvature,
                             BiasMetadata meta = {});

/// Pools same-batch vs full-batch relative errors over all scans.
BiasSummary bias_summary(const std::vector<ScanReport>& scans, BiasQuantity quantity,
                         BiasMetadata meta = {});

/// Linear-interpolation percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

}  // namespace mbq

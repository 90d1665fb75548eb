#include "mbq/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mbq/errors.hpp"

namespace mbq {

Matrix ScanReport::magnitudes() const { return -slopes.cwiseQuotient(curvatures); }

Vector ScanReport::full_magnitudes() const { return -full_slopes.cwiseQuotient(full_curvatures); }

Vector ScanReport::same_batch_slopes() const {
  if (!same_batch_column) throw ValidationError("scan report has no same-batch column");
  return slopes.col(*same_batch_column);
}

Vector ScanReport::same_batch_curvatures() const {
  if (!same_batch_column) throw ValidationError("scan report has no same-batch column");
  return curvatures.col(*same_batch_column);
}

namespace {

ScanReport empty_report(const std::string& source, const std::vector<QuadraticModel>& batches,
                        Index n_dirs) {
  ScanReport r;
  r.source_batch = source;
  const auto nb = static_cast<Index>(batches.size());
  r.slopes.resize(n_dirs, nb);
  r.curvatures.resize(n_dirs, nb);
  r.full_slopes.resize(n_dirs);
  r.full_curvatures.resize(n_dirs);
  for (Index j = 0; j < nb; ++j) {
    const auto& id = batches[static_cast<std::size_t>(j)].batch_id;
    r.batch_ids.push_back(id);
    if (id == source && !r.same_batch_column) r.same_batch_column = j;
  }
  return r;
}

void evaluate_row(ScanReport& r, Index i, const Vector& theta, const Vector& d,
                  const std::vector<QuadraticModel>& batches, const QuadraticModel& full) {
  for (std::size_t j = 0; j < batches.size(); ++j) {
    r.slopes(i, static_cast<Index>(j)) = directional_slope(batches[j], theta, d);
    r.curvatures(i, static_cast<Index>(j)) = directional_curvature(batches[j], d);
  }
  r.full_slopes(i) = directional_slope(full, theta, d);
  r.full_curvatures(i) = directional_curvature(full, d);
}

}  // namespace

EigenScan eigendirection_scan(const QuadraticModel& source, const std::vector<QuadraticModel>& batches,
                              const QuadraticModel& full, Index k, Rng& rng,
                              const TopKOptions& topk) {
  if (k < 1 || k > source.dim()) throw ValidationError("eigendirection_scan: k must be in [1, P]");
  const EigenDecomposition eig =
      top_k_eigenpairs(source.curvature.as_function(), source.dim(), k, rng, topk);
  EigenScan out;
  out.directions.kind = DirectionKind::eigen;
  out.directions.source_batch = source.batch_id;
  out.report = empty_report(source.batch_id, batches, k);
  for (Index i = 0; i < k; ++i) {
    Vector d = eig.basis.col(i);
    out.directions.eigenvalues.push_back(eig.eigenvalues(i));
    evaluate_row(out.report, i, source.anchor, d, batches, full);
    out.directions.directions.push_back(std::move(d));
  }
  return out;
}

std::vector<EigenScan> eigendirection_scan(const Mlp& model, const Vector& theta,
                                           const std::vector<Batch>& batches,
                                           const Dataset& dataset, const ScanSettings& s) {
  std::vector<QuadraticModel> quads;
  quads.reserve(batches.size());
  for (std::size_t m = 0; m < batches.size(); ++m) {
    KfacOptions kfac = s.kfac;
    kfac.seed = Rng(s.kfac.seed).split(m).seed();
    quads.push_back(build_quadratic(model, theta, batches[m], s.kind, s.beta, s.delta, kfac));
  }
  const QuadraticModel full =
      fullbatch_quadratic(model, theta, dataset, s.kind, s.beta, s.delta, s.chunk_size, s.kfac);
  std::vector<EigenScan> out;
  const Rng base(s.seed);
  for (std::size_t m = 0; m < quads.size(); ++m) {
    Rng rng = base.split(m);
    out.push_back(eigendirection_scan(quads[m], quads, full, s.k, rng, s.topk));
  }
  return out;
}

EigenScan cg_direction_scan(const QuadraticModel& q_b, const std::vector<QuadraticModel>& batches,
                            const QuadraticModel& full, int K, const CgConfig& config) {
  CgConfig cfg = config;
  cfg.max_iterations = K;
  const CgTrace trace = cg_minimize(q_b, cfg);
  EigenScan out;
  out.directions.kind = DirectionKind::cg;
  out.directions.source_batch = q_b.batch_id;
  out.report = empty_report(q_b.batch_id, batches, trace.steps());
  out.report.trace_magnitudes = trace.magnitudes;
  out.report.termination = trace.termination;
  for (int p = 0; p < trace.steps(); ++p) {
    const auto pi = static_cast<std::size_t>(p);
    evaluate_row(out.report, p, trace.iterates[pi], trace.directions[pi], batches, full);
    out.directions.directions.push_back(trace.directions[pi]);
    out.directions.anchors.push_back(trace.iterates[pi]);
  }
  return out;
}

ScanReport display_normalized(const ScanReport& report) {
  const Index n = report.num_directions();
  const Vector key = report.same_batch_column ? report.same_batch_slopes() : report.full_slopes;
  std::vector<double> sign(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) sign[static_cast<std::size_t>(i)] = key(i) < 0.0 ? -1.0 : 1.0;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return sign[static_cast<std::size_t>(a)] * key(a) > sign[static_cast<std::size_t>(b)] * key(b);
  });
  ScanReport out = report;
  for (Index r = 0; r < n; ++r) {
    const Index i = order[static_cast<std::size_t>(r)];
    const double s = sign[static_cast<std::size_t>(i)];
    out.slopes.row(r) = s * report.slopes.row(i);
    out.curvatures.row(r) = report.curvatures.row(i);
    out.full_slopes(r) = s * report.full_slopes(i);
    out.full_curvatures(r) = report.full_curvatures(i);
    if (!report.trace_magnitudes.empty()) {
      out.trace_magnitudes[static_cast<std::size_t>(r)] = report.trace_magnitudes[static_cast<std::size_t>(i)];
    }
  }
  out.display_sign = std::move(sign);
  out.display_order = std::move(order);
  return out;
}

namespace {

Matrix stack(const DirectionSet& s) {
  if (s.directions.empty()) return {};
  Matrix m(s.directions.front().size(), static_cast<Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.directions[i].size() != m.rows()) throw ValidationError("direction set has mixed dimensions");
    m.col(static_cast<Index>(i)) = s.directions[i];
  }
  return m;
}

OverlapMatrix overlap_of(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows()) throw ValidationError("overlap_matrix: ambient dimension mismatch");
  OverlapMatrix out;
  out.omega = (u.transpose() * v).array().square();
  out.captured_mass = out.omega.rowwise().sum();
  return out;
}

}  // namespace

OverlapMatrix overlap_matrix(const DirectionSet& u, const DirectionSet& v) {
  OverlapMatrix out = overlap_of(stack(u), stack(v));
  out.batch_u = u.source_batch;
  out.batch_v = v.source_batch;
  return out;
}

OverlapMatrix overlap_matrix(const EigenDecomposition& u, const EigenDecomposition& v) {
  return overlap_of(u.basis, v.basis);
}

double overlap_gray(double omega) {
  if (!(omega > 1e-8)) return 0.0;
  return std::clamp((std::log10(omega) + 8.0) / 8.0, 0.0, 1.0);
}

Vector spectral_transfer(const EigenDecomposition& eig_b, const EigenDecomposition& eig_bt,
                         const OverlapMatrix& omega) {
  if (omega.omega.rows() != eig_b.size() || omega.omega.cols() != eig_bt.size()) {
    throw ValidationError("spectral_transfer: overlap shape does not match decompositions");
  }
  return omega.omega * eig_bt.eigenvalues;
}

SlopeBias slope_bias(const QuadraticModel& q_b, const QuadraticModel& q_bt, const Vector& theta) {
  if (q_b.dim() != q_bt.dim()) throw ValidationError("slope_bias: dimension mismatch");
  const Vector g = grad_at(q_b, theta);
  const Vector gt = grad_at(q_bt, theta);
  SlopeBias out;
  out.grad_norm_b = g.norm();
  out.grad_norm_bt = gt.norm();
  if (!(out.grad_norm_b > 0.0)) throw ValidationError("slope_bias: zero gradient on the direction batch");
  const Vector d = -g / out.grad_norm_b;
  out.slope_b = d.dot(g);
  out.slope_bt = d.dot(gt);
  const double cos_a =
      out.grad_norm_bt > 0.0 ? std::clamp(g.dot(gt) / (out.grad_norm_b * out.grad_norm_bt), -1.0, 1.0)
                             : 1.0;
  out.alpha = std::acos(cos_a);
  out.projection_residual = out.slope_bt + g.dot(gt) / out.grad_norm_b;
  out.equal_norm_residual = (out.slope_bt - out.slope_b) - out.grad_norm_b * (1.0 - cos_a);
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BiasSummary summarize_errors(const std::vector<double>& measured, const std::vector<double>& truth,
                             BiasQuantity quantity, BiasMetadata meta) {
  if (measured.size() != truth.size()) throw ValidationError("summarize_errors: length mismatch");
  BiasSummary s;
  s.meta = std::move(meta);
  s.quantity = quantity;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    if (std::abs(truth[i]) < 1e-14) {
      ++s.excluded;
      continue;
    }
    s.errors.push_back(std::abs(measured[i] - truth[i]) / std::abs(truth[i]));
  }
  if (!s.errors.empty()) {
    s.mean = std::accumulate(s.errors.begin(), s.errors.end(), 0.0) / static_cast<double>(s.errors.size());
    s.p25 = percentile(s.errors, 0.25);
    s.p50 = percentile(s.errors, 0.5);
    s.p75 = percentile(s.errors, 0.75);
  } else {
    s.mean = s.p25 = s.p50 = s.p75 = std::nan("");
  }
  return s;
}

BiasSummary bias_summary(const std::vector<ScanReport>& scans, BiasQuantity quantity,
                         BiasMetadata meta) {
  std::vector<double> measured;
  std::vector<double> truth;
  for (const auto& r : scans) {
    const Vector m = quantity == BiasQuantity::slope ? r.same_batch_slopes() : r.same_batch_curvatures();
    const Vector& t = quantity == BiasQuantity::slope ? r.full_slopes : r.full_curvatures;
    for (Index i = 0; i < m.size(); ++i) {
      measured.push_back(m(i));
      truth.push_back(t(i));
    }
  }
  return summarize_errors(measured, truth, quantity, std::move(meta));
}

}  // namespace mbq

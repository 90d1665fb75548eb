#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbq/cg.hpp"
#include "mbq/config.hpp"
#include "mbq/diagnostics.hpp"

namespace mbq {

/// Independent stream seed for a (seed, purpose) pair.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

struct PreparedModel {
  Mlp model;
  GeneratedData data;
  Vector theta;
  std::vector<Checkpoint> checkpoints;
};

/// Generates the data and trains (or loads cfg.checkpoint). hidden overrides
/// cfg.hidden when given.
PreparedModel prepare_model(const ExperimentConfig& cfg,
                            const std::optional<std::vector<int>>& hidden = std::nullopt);

struct TrendRow {
  Index batch_size = 0;
  std::uint64_t seed = 0;
  BiasSummary slope;
  BiasSummary curvature;
};

struct BiasScanResult {
  std::vector<EigenScan> scans;
  std::optional<EigenScan> cg_scan;
  std::vector<TrendRow> trend;
};

BiasScanResult run_bias_scan(const ExperimentConfig& cfg, const PreparedModel& pm);

/// Same-batch vs full-batch relative errors per batch size and seed.
std::vector<TrendRow> batch_size_trend(const ExperimentConfig& cfg, const PreparedModel& pm);

struct OverlapResult {
  std::vector<DirectionSet> sets;
  std::vector<OverlapMatrix> pairs;
};

OverlapResult run_overlap(const ExperimentConfig& cfg, const PreparedModel& pm);

struct CgRun {
  std::string method;  // single, debiased, fullbatch, fullbatch_debiased
  std::uint64_t seed = 0;
  std::vector<double> full_values;  // q(theta_p; D)
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> test_loss;
  std::vector<double> test_accuracy;
  std::vector<double> magnitudes;
  Termination termination = Termination::max_iter;
  long long matvecs = 0;
};

std::vector<CgRun> run_cg_compare(const ExperimentConfig& cfg, const PreparedModel& pm);

struct LaRow {
  std::string method;  // single, debiased, fullbatch
  double beta = 0.0;
  std::string metric;  // nll, accuracy, ece, auroc
  double value = 0.0;
  std::uint64_t seed = 0;
};

std::vector<LaRow> run_laplace_sweep(const ExperimentConfig& cfg, const PreparedModel& pm);

struct SeriesRow {
  double epoch = 0.0;
  int width = 0;
  Index num_params = 0;
  std::string batch_id;
  BiasSummary slope;
  BiasSummary curvature;
};

/// One row per (checkpoint, source batch).
std::vector<SeriesRow> run_bias_over_training(const ExperimentConfig& cfg, const PreparedModel& pm);
/// Trains one model per width (all hidden layers set to it); one row per
/// (width, source batch).
std::vector<SeriesRow> run_size_sweep(const ExperimentConfig& cfg);

/// Runs cfg.kind and writes CSV / JSON / SVG into out_dir. Returns the summary
/// that was written to summary.json.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

struct VerifyReport {
  std::string digest;
  std::vector<std::string> checked;
  std::vector<std::string> mismatched;
  std::vector<std::string> missing_digest;
  bool ok() const { return mismatched.empty() && missing_digest.empty() && !checked.empty(); }
};

/// Every csv/json/svg file under dir must carry the digest in summary.json.
VerifyReport verify_results(const std::string& dir);

}  // namespace mbq

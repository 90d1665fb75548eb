#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbq/data.hpp"
#include "mbq/laplace.hpp"
#include "mbq/quadratic.hpp"
#include "mbq/train.hpp"

namespace mbq {

enum class ExperimentKind { bias_scan, overlap, cg_compare, laplace_sweep, bias_over_training, size_sweep };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::bias_scan;
  std::uint64_t seed = 7;                           // training and derived streams
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};  // repetitions
  bool plots = true;

  DatasetSpec data{Generator::gaussian_blobs, 2560, 8, 4, 1.0, 0.2, OodShift{3.0, 1.5}, 1, ""};

  std::vector<int> hidden{32, 32};
  Activation activation = Activation::relu;
  LossKind loss = LossKind::cross_entropy;
  RegularizerScope regularizer = RegularizerScope::weights_only;
  std::string checkpoint;  // load instead of training when set

  SgdConfig train;

  CurvatureKind curvature = CurvatureKind::ggn;
  std::optional<double> beta;  // defaults to train.beta
  double delta = 0.0;
  FisherMode fisher_mode = FisherMode::mc_sample;
  Index chunk_size = 512;

  Index scan_batch_size = 32;
  Index scan_num_batches = 20;
  Index scan_k = 10;
  int scan_cg_directions = 0;  // also scan this many CG directions when > 0
  std::vector<Index> scan_batch_sizes;  // batch-size trend, empty to skip
  std::vector<int> widths{8, 32, 128};  // size-sweep hidden widths

  int cg_iterations = 30;
  double cg_epsilon = 1e-10;
  Index cg_batch_size = 64;
  std::optional<Index> cg_debiased_batch_size;  // defaults to half of cg_batch_size
  bool cg_same_batch = false;
  bool cg_fullbatch = false;

  std::vector<double> la_grid = default_prior_grid();
  int la_samples = 40;
  Index la_batch_size = 64;
  std::optional<Index> la_debiased_batch_size;
  int ece_bins = 15;

  double effective_beta() const { return beta.value_or(train.beta); }
  Index debiased_cg_batch() const { return cg_debiased_batch_size.value_or(cg_batch_size / 2); }
  Index debiased_la_batch() const { return la_debiased_batch_size.value_or(la_batch_size / 2); }
  MlpArchitecture architecture() const;
  void validate() const;

  /// Every field, resolved, one `section.key = value` per line in fixed order.
  std::string canonical() const;
  /// SHA-256 of canonical(), hex.
  std::string digest() const;
};

/// Parses `[section]` / `key = value` / `# comment` text. Unknown keys are
/// validation errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

std::string sha256_hex(const std::string& bytes);

}  // namespace mbq

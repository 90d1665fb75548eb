#pragma once

#include <vector>

#include "mbq/linalg.hpp"

namespace mbq {

/// Predicted class probabilities (rows on the simplex within 1e-8) and labels.
struct ProbTable {
  Matrix probs;
  std::vector<int> labels;

  void validate() const;
};

/// Row argmax; ties go to the lowest class index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

double accuracy(const ProbTable& t);

/// Mean of -ln p_true, with p_true clamped below at 1e-12.
double nll(const ProbTable& t);
constexpr double kNllClamp = 1e-12;

/// Equal-width bins on (0, 1] over top-label confidence. A confidence on a bin
/// edge belongs to the lower bin; confidence 0 goes to the first bin.
double ece(const ProbTable& t, int n_bins = 15);

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
double auroc(const std::vector<double>& scores, const std::vector<bool>& is_positive);

/// -sum p ln p with 0 ln 0 = 0.
double predictive_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& row);
std::vector<double> predictive_entropies(const Matrix& probs);

}  // namespace mbq

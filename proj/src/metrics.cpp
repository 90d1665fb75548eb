#include "mbq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mbq/errors.hpp"

namespace mbq {

void ProbTable::validate() const {
  if (probs.rows() == 0) throw ValidationError("probability table is empty");
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ValidationError("probability table: row count does not match label count");
  }
  for (Index n = 0; n < probs.rows(); ++n) {
    if ((probs.row(n).array() < 0.0).any() || std::abs(probs.row(n).sum() - 1.0) > 1e-8) {
      throw ValidationError("probability table: row " + std::to_string(n) + " is not on the simplex");
    }
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= probs.cols()) {
      throw ValidationError("probability table: label out of range in row " + std::to_string(n));
    }
  }
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = static_cast<int>(c);
  }
  return best;
}

double accuracy(const ProbTable& t) {
  t.validate();
  Index correct = 0;
  for (Index n = 0; n < t.probs.rows(); ++n) {
    if (argmax(t.probs.row(n)) == t.labels[static_cast<std::size_t>(n)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(t.probs.rows());
}

double nll(const ProbTable& t) {
  t.validate();
  double total = 0.0;
  for (Index n = 0; n < t.probs.rows(); ++n) {
    const double p = t.probs(n, t.labels[static_cast<std::size_t>(n)]);
    total -= std::log(std::max(p, kNllClamp));
  }
  return total / static_cast<double>(t.probs.rows());
}

double ece(const ProbTable& t, int n_bins) {
  if (n_bins < 1) throw ValidationError("ece: n_bins must be >= 1");
  t.validate();
  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> hits(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<Index> count(static_cast<std::size_t>(n_bins), 0);
  for (Index n = 0; n < t.probs.rows(); ++n) {
    const int pred = argmax(t.probs.row(n));
    const double conf = t.probs(n, pred);
    int bin = static_cast<int>(std::ceil(conf * n_bins)) - 1;
    bin = std::clamp(bin, 0, n_bins - 1);
    const auto b = static_cast<std::size_t>(bin);
    conf_sum[b] += conf;
    hits[b] += pred == t.labels[static_cast<std::size_t>(n)] ? 1.0 : 0.0;
    ++count[b];
  }
  const double total = static_cast<double>(t.probs.rows());
  double out = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    out += nb / total * std::abs(hits[b] / nb - conf_sum[b] / nb);
  }
  return out;
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& is_positive) {
  if (scores.size() != is_positive.size()) throw ValidationError("auroc: length mismatch");
  const auto n_pos = static_cast<double>(std::count(is_positive.begin(), is_positive.end(), true));
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw ValidationError("auroc: needs both positives and negatives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks (1-based) turn the rank sum into the pair count with half ties.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (is_positive[order[k]]) pos_rank_sum += mid;
    }
    i = j + 1;
  }
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double predictive_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  double h = 0.0;
  for (Index c = 0; c < row.size(); ++c) {
    if (row(c) > 0.0) h -= row(c) * std::log(row(c));
  }
  return h;
}

std::vector<double> predictive_entropies(const Matrix& probs) {
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Index n = 0; n < probs.rows(); ++n) out[static_cast<std::size_t>(n)] = predictive_entropy(probs.row(n));
  return out;
}

}  // namespace mbq

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion; the
// exit code reflects the hard criteria only (7 and 12 are reported, not gated).

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "mbq/cg.hpp"
#include "mbq/config.hpp"
#include "mbq/data.hpp"
#include "mbq/diagnostics.hpp"
#include "mbq/experiment.hpp"
#include "mbq/laplace.hpp"
#include "mbq/metrics.hpp"
#include "mbq/quadratic.hpp"
#include "support.hpp"

using namespace mbq;
using namespace mbq::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  int id;
  bool pass;
  bool soft;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail, bool soft = false) {
  std::printf("criterion %2d: %s%s  %s\n", id, pass ? "PASS" : "FAIL", soft ? " (soft)" : "", detail.c_str());
  std::fflush(stdout);
  g_outcomes.push_back({id, pass, soft});
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

QuadraticModel dense_quadratic(const Matrix& h, const Vector& g, const std::string& id = "D") {
  return QuadraticModel{Vector::Zero(g.size()), 0.0, g, CurvatureOperator::dense(h), id};
}

// ---------------------------------------------------------------------------

void criterion_1(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  Dataset sub;
  sub.inputs = pm.data.train.inputs.topRows(512);
  sub.labels.assign(pm.data.train.labels.begin(), pm.data.train.labels.begin() + 512);
  sub.num_classes = pm.data.train.num_classes;
  const auto batches = partition_batches(sub, 64, 8, 101);
  const double beta = cfg.effective_beta();
  std::vector<QuadraticModel> qs;
  for (const auto& b : batches) qs.push_back(build_quadratic(pm.model, pm.theta, b, CurvatureKind::ggn, beta, 0.0));
  const auto full = fullbatch_quadratic(pm.model, pm.theta, sub, CurvatureKind::ggn, beta, 0.0, 128);
  double worst_slope = 0.0, worst_curv = 0.0;
  Rng rng(102);
  for (std::size_t m = 0; m < qs.size(); ++m) {
    const auto scan = eigendirection_scan(qs[m], qs, full, 10, rng);
    const auto& r = scan.report;
    for (Index i = 0; i < r.num_directions(); ++i) {
      worst_slope = std::max(worst_slope, rel_err(r.slopes.row(i).mean(), r.full_slopes(i)));
      worst_curv = std::max(worst_curv, rel_err(r.curvatures.row(i).mean(), r.full_curvatures(i)));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_slope <= 1e-10 && worst_curv <= 1e-10 && secs < 60.0;
  report(1, pass,
         "P=" + std::to_string(pm.model.num_params()) + " max rel slope err " + fmt("%.2e", worst_slope) +
             ", curvature " + fmt("%.2e", worst_curv) + " over 8 sources x 10 directions, " + fmt("%.1fs", secs));
}

void criterion_2(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentConfig c = cfg;
  c.scan_batch_sizes.clear();
  const auto res = run_bias_scan(c, pm);
  std::vector<double> ratios;
  int over = 0;
  for (const auto& s : res.scans) {
    const double same = s.report.same_batch_curvatures()(0);
    const double full = s.report.full_curvatures(0);
    ratios.push_back(same / full);
    if (same > full) ++over;
  }
  const double frac = static_cast<double>(over) / static_cast<double>(ratios.size());
  const double med = median(ratios);
  const double secs = seconds_since(t0);
  report(2, frac >= 0.9 && med > 1.2 && secs < 300.0,
         std::to_string(over) + "/" + std::to_string(ratios.size()) + " sources over-estimate top curvature, median ratio " +
             fmt("%.3f", med) + ", " + fmt("%.1fs", secs));
}

// Strictly decreasing median curvature error per seed, for each curvature.
int decreasing_seeds(const PreparedModel& pm, ExperimentConfig c, const std::string& label) {
  c.scan_batch_sizes = {32, 128, 512};
  const auto rows = batch_size_trend(c, pm);
  std::map<std::uint64_t, std::vector<double>> by_seed;
  for (const auto& r : rows) by_seed[r.seed].push_back(r.curvature.p50);
  int decreasing = 0;
  for (const auto& [seed, med] : by_seed) {
    bool ok = med.size() == 3;
    for (std::size_t i = 1; ok && i < med.size(); ++i) ok = med[i] < med[i - 1];
    if (ok) ++decreasing;
    info(label + " seed " + std::to_string(seed) + ": median curvature rel err " + fmt("%.4f", med[0]) + " / " +
         fmt("%.4f", med[1]) + " / " + fmt("%.4f", med[2]));
  }
  return decreasing;
}

void criterion_3(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentConfig c = cfg;
  c.curvature = CurvatureKind::kfac;
  const int kfac = decreasing_seeds(pm, c, "kfac");
  c.curvature = CurvatureKind::ggn;
  const int ggn = decreasing_seeds(pm, c, "ggn ");
  const int seeds = static_cast<int>(cfg.seeds.size());
  info("ggn: " + std::to_string(ggn) + "/" + std::to_string(seeds) + " seeds strictly decreasing (reported only)");
  report(3, 2 * kfac > seeds,
         "kfac: " + std::to_string(kfac) + "/" + std::to_string(seeds) +
             " seeds strictly decreasing over {32,128,512}, " + fmt("%.1fs", seconds_since(t0)));
}

void criterion_4() {
  Rng rng(401);
  double entry_lo = 1.0, entry_hi = 0.0, row_dev = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(60));
    const EigenDecomposition u{random_orthogonal(rng, n), Vector::Zero(n)};
    const EigenDecomposition v{random_orthogonal(rng, n), Vector::Zero(n)};
    const auto o = overlap_matrix(u, v);
    entry_lo = std::min(entry_lo, o.omega.minCoeff());
    entry_hi = std::max(entry_hi, o.omega.maxCoeff());
    row_dev = std::max(row_dev, (o.omega.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  double transfer = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(63));
    const Matrix h = random_spd(rng, n, 0.0), ht = random_spd(rng, n, 0.0);
    const auto a = sym_eigh(DenseSymMatrix::symmetrized(h));
    const auto b = sym_eigh(DenseSymMatrix::symmetrized(ht));
    const Vector pred = spectral_transfer(a, b, overlap_matrix(a, b));
    for (Index i = 0; i < n; ++i) {
      const double direct = a.basis.col(i).dot(ht * a.basis.col(i));
      transfer = std::max(transfer, std::abs(pred(i) - direct) / std::max(std::abs(direct), 1e-300));
    }
  }
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(31));
    Vector lam = standard_normal(rng, n).cwiseAbs();
    std::sort(lam.data(), lam.data() + n, std::greater<>());
    const EigenDecomposition a{random_orthogonal(rng, n), lam}, b{random_orthogonal(rng, n), lam};
    const Vector pred = spectral_transfer(a, b, overlap_matrix(a, b));
    if (pred(0) > lam(0) + 1e-12 || pred(n - 1) < lam(n - 1) - 1e-12) ++violations;
  }
  const bool pass = entry_lo >= 0.0 && entry_hi <= 1.0 + 1e-12 && row_dev <= 1e-10 && transfer <= 1e-10 &&
                    violations == 0;
  report(4, pass,
         "omega in [" + fmt("%.1e", entry_lo) + ", " + fmt("%.15f", entry_hi) + "], row sum dev " + fmt("%.1e", row_dev) +
             ", transfer rel err " + fmt("%.1e", transfer) + ", " + std::to_string(violations) +
             "/1000 equal-spectra violations");
}

void criterion_5(const PreparedModel& pm, const ExperimentConfig& cfg) {
  Rng rng(501);
  double solve_err = 0.0;
  int max_steps = 0;
  double conj_window = 0.0, conj_all = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = random_spd(rng, 50, 0.5);
    const Vector g = standard_normal(rng, 50);
    const auto q = dense_quadratic(h, g);
    const auto t = cg_minimize(q, CgConfig{1e-12 * g.norm(), 50});
    const Vector x = h.llt().solve(-g);
    solve_err = std::max(solve_err, rel_err(t.last(), x));
    max_steps = std::max(max_steps, t.steps());
    for (int p = 0; p < t.steps(); ++p) {
      const Vector hd = h * t.directions[p];
      const bool in_window = t.residual_norms[p] >= 1e-4 * t.residual_norms[0];
      for (int j = 0; j < p; ++j) {
        const Vector& e = t.directions[j];
        const double c = std::abs(e.dot(hd)) / std::sqrt(t.directions[p].dot(hd) * e.dot(h * e));
        conj_all = std::max(conj_all, c);
        if (in_window || j + 1 == p) conj_window = std::max(conj_window, c);
      }
    }
  }
  // Same-batch CG on a fixture mini-batch quadratic.
  const auto batches = partition_batches(pm.data.train, 64, 1, 502);
  const auto q = build_quadratic(pm.model, pm.theta, batches[0], CurvatureKind::ggn, cfg.effective_beta(), 0.0);
  const auto t = cg_minimize(q, CgConfig{1e-300, 30});
  double min_tau = INFINITY;
  bool monotone = true;
  for (int p = 0; p < t.steps(); ++p) {
    min_tau = std::min(min_tau, t.magnitudes[p]);
    if (value(q, t.iterates[p + 1]) > value(q, t.iterates[p])) monotone = false;
  }
  const bool pass = solve_err <= 1e-8 && max_steps <= 50 && conj_window <= 1e-8 && min_tau > 0.0 && monotone &&
                    t.steps() > 0;
  report(5, pass,
         "solve rel err " + fmt("%.1e", solve_err) + " in <= " + std::to_string(max_steps) + " its, conjugacy " +
             fmt("%.1e", conj_window) + ", fixture " + std::to_string(t.steps()) + " steps min tau " +
             fmt("%.2e", min_tau) + (monotone ? ", monotone" : ", NOT monotone"));
  info("conjugacy is measured while ||r_p|| >= 1e-4 ||r_0|| plus consecutive pairs; full-run maximum " +
       fmt("%.2e", conj_all) + " (finite-precision loss of global conjugacy near round-off)");
}

void criterion_6(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const double beta = cfg.effective_beta();
  const auto batches = partition_batches(pm.data.train, 32, 2, 601);
  const auto qa = build_quadratic(pm.model, pm.theta, batches[0], CurvatureKind::ggn, beta, 0.0);
  const auto qa2 = build_quadratic(pm.model, pm.theta, batches[0], CurvatureKind::ggn, beta, 0.0);
  const auto self = debiased_cg(qa, qa2, 30, CgConfig{1e-300, 30});
  bool bitwise = self.direction_trace.magnitudes == self.debiased_trace.magnitudes &&
                 self.direction_trace.iterates.size() == self.debiased_trace.iterates.size();
  for (std::size_t p = 0; bitwise && p < self.direction_trace.iterates.size(); ++p)
    bitwise = self.direction_trace.iterates[p] == self.debiased_trace.iterates[p];

  const auto qb = build_quadratic(pm.model, pm.theta, batches[0], CurvatureKind::ggn, beta, 0.0);
  const auto qbt = build_quadratic(pm.model, pm.theta, batches[1], CurvatureKind::ggn, beta, 0.0);
  const auto r = debiased_cg(qb, qbt, 30, CgConfig{1e-300, 30}, DebiasMode::interleaved, true);
  const long long counted = qb.curvature.matvec_count() + qbt.curvature.matvec_count();
  const auto fresh = build_quadratic(pm.model, pm.theta, batches[1], CurvatureKind::ggn, beta, 0.0);
  const auto& tr = r.debiased_trace;
  double worst = 0.0;
  for (int p = 0; p <= tr.steps(); ++p) worst = std::max(worst, rel_err(tr.gradients[p], grad_at(fresh, tr.iterates[p])));
  const double per_iter = static_cast<double>(counted) / std::max(1, tr.steps());
  const bool pass = bitwise && tr.steps() == 30 && worst <= 1e-10 && counted == 2LL * tr.steps();
  report(6, pass,
         std::string(bitwise ? "self-debias bitwise" : "self-debias DIFFERS") + ", recursive grad rel err " +
             fmt("%.1e", worst) + " over " + std::to_string(tr.steps()) + " its, " + fmt("%.1f", per_iter) +
             " matvecs/iteration");
}

void criterion_7(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentConfig c = cfg;
  c.kind = ExperimentKind::cg_compare;
  c.delta = 0.0;
  c.cg_iterations = 30;
  c.cg_batch_size = 64;
  c.cg_debiased_batch_size = 32;
  c.cg_fullbatch = false;
  const auto runs = run_cg_compare(c, pm);
  std::map<std::uint64_t, const CgRun*> single, debiased;
  for (const auto& r : runs) {
    if (r.method == "single") single[r.seed] = &r;
    if (r.method == "debiased") debiased[r.seed] = &r;
  }
  int never_above = 0, better = 0;
  for (const auto& [seed, d] : debiased) {
    const double q0 = d->full_values.front();
    const double peak = *std::max_element(d->full_values.begin(), d->full_values.end());
    if (peak <= q0) ++never_above;
    if (d->full_values.back() <= single[seed]->full_values.back()) ++better;
    info("seed " + std::to_string(seed) + ": q0 " + fmt("%.4f", q0) + ", debiased max " + fmt("%.4f", peak) +
         " final " + fmt("%.4f", d->full_values.back()) + ", single final " +
         fmt("%.4f", single[seed]->full_values.back()));
  }
  const int n = static_cast<int>(debiased.size());
  report(7, never_above == n && better >= 3,
         "debiased never above q(theta0) in " + std::to_string(never_above) + "/" + std::to_string(n) +
             " seeds, debiased final <= single final in " + std::to_string(better) + "/" + std::to_string(n) + ", " +
             fmt("%.1fs", seconds_since(t0)),
         true);
}

void criterion_8() {
  Rng rng(801);
  double oracle = 0.0;
  for (auto [m, n] : std::vector<std::pair<int, int>>{{2, 3}, {4, 4}, {8, 8}, {5, 7}, {1, 6}}) {
    const Mlp model({{m, n}, Activation::identity, LossKind::cross_entropy});
    const Matrix a = random_spd(rng, m, 0.0), b = random_spd(rng, n, 0.0);
    const auto post = build_posterior(make_blocks({KfacFactors{0, a, b}}), Vector::Zero(model.num_params()),
                                      model.layout(), 29, 0.4);
    const auto& blk = post.blocks[0];
    const Matrix u = dense_kron(blk.eig_a.basis, blk.eig_b.basis);
    const Matrix cov = u * block_covariance_eigenvalues(post, 0).asDiagonal() * u.transpose();
    const Matrix expected = (29.0 * (dense_kron(a, b) + 0.4 * Matrix::Identity(m * n, m * n))).inverse();
    oracle = std::max(oracle, rel_err(cov, expected));
  }

  const Mlp model({{4, 3}, Activation::identity, LossKind::cross_entropy});
  const Matrix a = random_spd(rng, 4, 0.1), b = random_spd(rng, 3, 0.1);
  const Vector mean = standard_normal(rng, model.num_params());
  const auto post = build_posterior(make_blocks({KfacFactors{0, a, b}}), mean, model.layout(), 5, 0.2);
  const auto& wb = model.layout().weight(0);
  Matrix emp = Matrix::Zero(wb.size(), wb.size());
  const int samples = 100000;
  for (int s = 0; s < samples; ++s) {
    const Vector x = sample_params(post, rng).segment(wb.offset, wb.size()) - mean.segment(wb.offset, wb.size());
    emp.noalias() += x * x.transpose();
  }
  emp /= samples;
  const Matrix expected = (5.0 * (dense_kron(a, b) + 0.2 * Matrix::Identity(12, 12))).inverse();
  const double sampling = rel_err(emp, expected);

  double directional = 0.0, self = 0.0;
  for (auto [m, n] : std::vector<std::pair<int, int>>{{3, 2}, {4, 4}, {8, 8}}) {
    const auto kb = KfacBlock::from_factors({0, random_spd(rng, m, 0.0), random_spd(rng, n, 0.0)});
    const auto kbt = KfacBlock::from_factors({0, random_spd(rng, m, 0.0), random_spd(rng, n, 0.0)});
    const auto hat = debias_kfac({kb}, {kbt})[0];
    const Matrix k_b = dense_kron(kb.factor_a.matrix(), kb.factor_b.matrix());
    const Matrix k_bt = dense_kron(kbt.factor_a.matrix(), kbt.factor_b.matrix());
    const Matrix k_hat = dense_kron(hat.factor_a.matrix(), hat.factor_b.matrix());
    const auto e = sym_eigh(DenseSymMatrix::symmetrized(k_b));
    for (Index i = 0; i < e.size(); ++i) {
      const Vector u = e.basis.col(i);
      directional = std::max(directional, std::abs(u.dot(k_hat * u) - u.dot(k_bt * u)) / (1 + std::abs(u.dot(k_bt * u))));
    }
    const auto same = debias_kfac({kb}, {kb})[0];
    self = std::max(self, (same.factor_a.matrix() - kb.factor_a.matrix()).cwiseAbs().maxCoeff());
    self = std::max(self, (same.factor_b.matrix() - kb.factor_b.matrix()).cwiseAbs().maxCoeff());
  }
  report(8, oracle <= 1e-10 && sampling <= 0.05 && directional <= 1e-10 && self <= 1e-12,
         "covariance oracle " + fmt("%.1e", oracle) + ", sampling " + fmt("%.3f", sampling) + " at 1e5, directional " +
             fmt("%.1e", directional) + ", self-debias " + fmt("%.1e", self));
}

void criterion_9(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentConfig c = cfg;
  c.kind = ExperimentKind::laplace_sweep;
  const auto rows = run_laplace_sweep(c, pm);
  const double smallest = *std::min_element(c.la_grid.begin(), c.la_grid.end());
  std::map<std::uint64_t, std::map<std::string, double>> nll;
  for (const auto& r : rows)
    if (r.metric == "nll" && r.beta == smallest) nll[r.seed][r.method] = r.value;
  int closer = 0;
  for (auto& [seed, m] : nll) {
    const double dd = std::abs(m["debiased"] - m["fullbatch"]);
    const double ds = std::abs(m["single"] - m["fullbatch"]);
    if (dd <= ds) ++closer;
    info("seed " + std::to_string(seed) + ": nll full " + fmt("%.4f", m["fullbatch"]) + ", debiased " +
         fmt("%.4f", m["debiased"]) + ", single " + fmt("%.4f", m["single"]));
  }
  const double secs = seconds_since(t0);
  report(9, closer >= 4 && secs < 600.0,
         "debiased closer to full-batch NLL at beta=" + fmt("%g", smallest) + " in " + std::to_string(closer) + "/" +
             std::to_string(nll.size()) + " seeds, " + fmt("%.1fs", secs));
}

void criterion_10() {
  Rng rng(1001);
  double grad_err = 0.0, hvp_err = 0.0, ggn_err = 0.0, min_rq = INFINITY;
  const double h = 1e-5;
  for (auto act : {Activation::tanh, Activation::relu}) {
    const Mlp model({{4, 9, 7, 3}, act, LossKind::cross_entropy});
    const Vector theta = model.init_params(rng);
    const Batch b = random_batch(rng, 24, 4, 3);
    const Index n = model.num_params();
    const Vector g = model.loss_and_grad(theta, b, 0.01).gradient;
    Vector fd(n);
    for (Index i = 0; i < n; ++i) {
      Vector e = Vector::Zero(n);
      e(i) = h;
      fd(i) = (model.loss(theta + e, b, 0.01) - model.loss(theta - e, b, 0.01)) / (2 * h);
    }
    grad_err = std::max(grad_err, rel_err(g, fd));
    for (int k = 0; k < 3; ++k) {
      const Vector v = random_unit(rng, n);
      const Vector fdh = (model.loss_and_grad(theta + h * v, b, 0.01).gradient -
                          model.loss_and_grad(theta - h * v, b, 0.01).gradient) / (2 * h);
      hvp_err = std::max(hvp_err, rel_err(model.hvp(theta, b, 0.01, v), fdh));
    }
  }
  // Explicit J^T H J assembly on a P <= 200 net.
  const Mlp model({{3, 8, 4, 3}, Activation::tanh, LossKind::cross_entropy});
  const Vector theta = model.init_params(rng);
  const Batch b = random_batch(rng, 20, 3, 3);
  const Index p = model.num_params();
  Matrix dense = Matrix::Zero(p, p);
  for (Index s = 0; s < b.size(); ++s) {
    const Vector x = b.inputs.row(s).transpose();
    Matrix j(3, p);
    for (Index i = 0; i < p; ++i) j.col(i) = model.jacobian_vp(theta, x, Vector::Unit(p, i));
    const Matrix logits = model.forward(theta, b.inputs.row(s));
    const Vector pr = softmax_rows(logits).row(0).transpose();
    const Matrix hl = Matrix(pr.asDiagonal()) - pr * pr.transpose();
    dense += j.transpose() * hl * j;
  }
  dense /= static_cast<double>(b.size());
  Matrix ggn(p, p);
  for (Index i = 0; i < p; ++i) ggn.col(i) = model.ggn_vp(theta, b, 0.0, Vector::Unit(p, i));
  ggn_err = rel_err(ggn, dense);
  for (int k = 0; k < 200; ++k) {
    const Vector v = random_unit(rng, p);
    min_rq = std::min(min_rq, v.dot(model.ggn_vp(theta, b, 0.0, v)));
  }
  min_rq = std::min(min_rq, sym_eigh(DenseSymMatrix::symmetrized(ggn)).eigenvalues.minCoeff());
  report(10, grad_err <= 1e-5 && hvp_err <= 1e-5 && ggn_err <= 1e-8 && min_rq >= -1e-12,
         "grad vs FD " + fmt("%.1e", grad_err) + ", HVP vs FD " + fmt("%.1e", hvp_err) + ", GGN vs J'HJ " +
             fmt("%.1e", ggn_err) + " (P=" + std::to_string(p) + "), min Rayleigh " + fmt("%.1e", min_rq));
}

ProbTable table(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  ProbTable t;
  t.probs.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.probs(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  t.labels = std::move(labels);
  return t;
}

void criterion_11() {
  int failed = 0, checked = 0;
  const auto expect = [&](double got, double want, double tol) {
    ++checked;
    if (!(std::abs(got - want) <= tol)) ++failed;
  };
  expect(accuracy(table({{1, 0, 0}, {0, 1, 0}}, {0, 1})), 1.0, 0.0);
  expect(accuracy(table({{1, 0, 0}, {0, 1, 0}}, {2, 0})), 0.0, 0.0);
  expect(accuracy(table({{0.7, 0.3}, {0.2, 0.8}, {0.6, 0.4}}, {0, 1, 1})), 2.0 / 3.0, 1e-15);
  expect(nll(table({{1, 0}}, {0})), 0.0, 0.0);
  expect(nll(table({{std::exp(-1.0), 1 - std::exp(-1.0)}}, {0})), 1.0, 1e-15);
  expect(nll(table({{0.5, 0.5}, {0.25, 0.75}}, {0, 0})), 1.5 * std::log(2.0), 1e-15);
  expect(ece(table({{0.8, 0.2}}, {0}), 15), 0.2, 1e-15);
  expect(ece(table({{0.8, 0.2}, {0.6, 0.4}}, {0, 1}), 15), 0.4, 1e-15);
  expect(ece(table({{0.5, 0.5}, {0.5, 0.5}}, {0, 1}), 15), 0.0, 1e-15);
  expect(auroc({0.9, 0.8, 0.2, 0.1}, {true, true, false, false}), 1.0, 0.0);
  expect(auroc({0.9, 0.3, 0.5, 0.1}, {true, true, false, false}), 0.75, 0.0);
  expect(auroc({0.3, 0.3, 0.3, 0.3}, {true, false, true, false}), 0.5, 0.0);
  expect(predictive_entropy(Eigen::RowVector4d(0, 0, 1, 0)), 0.0, 0.0);
  expect(predictive_entropy(Eigen::RowVector4d(0.25, 0.25, 0.25, 0.25)), std::log(4.0), 1e-15);
  expect(predictive_entropy(Eigen::RowVector4d(0.5, 0.5, 0, 0)), std::log(2.0), 1e-15);

  Rng rng(1101);
  const Mlp model({{5, 7, 4}, Activation::relu, LossKind::cross_entropy});
  const Vector theta = model.init_params(rng);
  const Batch b = random_batch(rng, 40, 5, 4);
  ProbTable t{softmax_rows(model.forward(theta, b.inputs)), {}};
  for (Index n = 0; n < b.size(); ++n) t.labels.push_back(static_cast<int>(n % 4));
  const double cross = std::abs(nll(t) - model.loss_and_grad(theta, b, 0.0).loss);
  report(11, failed == 0 && cross <= 1e-10,
         std::to_string(checked - failed) + "/" + std::to_string(checked) + " example values exact, nll vs loss " +
             fmt("%.1e", cross));
}

bool same_series(const std::vector<SeriesRow>& a, const std::vector<SeriesRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || a[i].width != b[i].width || a[i].batch_id != b[i].batch_id ||
        a[i].slope.errors != b[i].slope.errors || a[i].curvature.errors != b[i].curvature.errors)
      return false;
  }
  return true;
}

void criterion_12(const PreparedModel& pm, const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentConfig c = cfg;
  c.widths = {8, 32, 128};
  const auto epochs = run_bias_over_training(c, pm);
  const auto epochs2 = run_bias_over_training(c, pm);
  const auto sizes = run_size_sweep(c);
  const auto sizes2 = run_size_sweep(c);
  std::map<double, std::vector<double>> by_epoch;
  std::map<int, std::vector<double>> by_width;
  for (const auto& r : epochs) by_epoch[r.epoch].push_back(r.curvature.p50);
  for (const auto& r : sizes) by_width[r.width].push_back(r.curvature.p50);
  std::string ep, wd;
  for (const auto& [e, v] : by_epoch) ep += " " + fmt("%g", e) + ":" + fmt("%.3f", median(v));
  for (const auto& [w, v] : by_width) wd += " " + std::to_string(w) + ":" + fmt("%.3f", median(v));
  info("median curvature rel err by epoch:" + ep);
  info("median curvature rel err by width:" + wd);
  std::vector<double> wmed;
  for (const auto& [w, v] : by_width) wmed.push_back(median(v));
  const bool increasing = std::is_sorted(wmed.begin(), wmed.end());
  info(std::string("width trend ") + (increasing ? "increasing" : "not monotone increasing") + " (logged only)");
  const bool pass = !epochs.empty() && by_width.size() == 3 && same_series(epochs, epochs2) && same_series(sizes, sizes2);
  report(12, pass,
         std::to_string(by_epoch.size()) + " checkpoints, widths {8,32,128}, deterministic reruns " +
             (pass ? "identical" : "DIFFER") + ", " + fmt("%.1fs", seconds_since(t0)),
         true);
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const auto t0 = Clock::now();
  const ExperimentConfig cfg;  // documented defaults: the toy fixture
  std::printf("fixture: blobs N=%lld d=%d c=%d, hidden 32x32, %d epochs, seeds %zu\n",
              static_cast<long long>(cfg.data.n), cfg.data.d, cfg.data.c, cfg.train.epochs, cfg.seeds.size());
  const PreparedModel pm = prepare_model(cfg);

  const auto guarded = [&](int id, const auto& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what(), id == 7 || id == 12);
    }
  };
  guarded(1, [&] { criterion_1(pm, cfg); });
  guarded(2, [&] { criterion_2(pm, cfg); });
  guarded(3, [&] { criterion_3(pm, cfg); });
  guarded(4, [&] { criterion_4(); });
  guarded(5, [&] { criterion_5(pm, cfg); });
  guarded(6, [&] { criterion_6(pm, cfg); });
  guarded(7, [&] { criterion_7(pm, cfg); });
  guarded(8, [&] { criterion_8(); });
  guarded(9, [&] { criterion_9(pm, cfg); });
  guarded(10, [&] { criterion_10(); });
  guarded(11, [&] { criterion_11(); });
  guarded(12, [&] { criterion_12(pm, cfg); });

  int hard_fail = 0, soft_fail = 0;
  for (const auto& o : g_outcomes) {
    if (!o.pass) ++(o.soft ? soft_fail : hard_fail);
  }
  std::printf("summary: %d hard failures, %d soft failures, %.1fs total\n", hard_fail, soft_fail, seconds_since(t0));
  return hard_fail == 0 ? 0 : 1;
}

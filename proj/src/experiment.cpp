#include "mbq/experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "mbq/errors.hpp"
#include "mbq/laplace.hpp"
#include "mbq/metrics.hpp"
#include "mbq/report.hpp"

namespace mbq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kScanPartition = 10,
  kScanKfac = 11,
  kScanEig = 12,
  kTrend = 13,
  kCgSingle = 20,
  kCgDebiased = 21,
  kCgHalves = 22,
  kLaSingle = 30,
  kLaDebiased = 31,
  kLaKfac = 32,
  kLaFull = 33,
  kLaPredict = 34,
  kLaPredictOod = 35,
  kSeries = 40,
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return Rng(seed).split(tag).seed(); }

PreparedModel prepare_model(const ExperimentConfig& cfg, const std::optional<std::vector<int>>& hidden) {
  cfg.validate();
  MlpArchitecture arch = cfg.architecture();
  if (hidden) {
    arch.layer_sizes = {cfg.data.d};
    arch.layer_sizes.insert(arch.layer_sizes.end(), hidden->begin(), hidden->end());
    arch.layer_sizes.push_back(cfg.data.c);
  }
  PreparedModel pm{Mlp(arch, cfg.regularizer), generate_dataset(cfg.data), {}, {}};
  if (pm.data.train.input_dim() != cfg.data.d && cfg.data.generator == Generator::csv_file) {
    throw ValidationError("dataset file has " + std::to_string(pm.data.train.input_dim()) +
                          " inputs but data.d = " + std::to_string(cfg.data.d));
  }
  if (!cfg.checkpoint.empty() && !hidden) {
    Checkpoint c = load_checkpoint(cfg.checkpoint);
    if (c.arch.layer_sizes != arch.layer_sizes || c.arch.activation != arch.activation ||
        c.arch.loss != arch.loss) {
      throw ValidationError("checkpoint architecture does not match the config");
    }
    pm.theta = c.theta;
    pm.checkpoints.push_back(std::move(c));
    return pm;
  }
  Rng init(derive_seed(cfg.seed, kInit));
  const Vector theta0 = pm.model.init_params(init);
  Rng shuffle(derive_seed(cfg.seed, kShuffle));
  pm.checkpoints = train(pm.model, theta0, pm.data.train, cfg.train, shuffle, cfg.digest());
  pm.theta = pm.checkpoints.back().theta;
  return pm;
}

namespace {

ScanSettings scan_settings(const ExperimentConfig& cfg, std::uint64_t seed) {
  ScanSettings s;
  s.kind = cfg.curvature;
  s.beta = cfg.effective_beta();
  s.delta = cfg.delta;
  s.k = cfg.scan_k;
  s.chunk_size = cfg.chunk_size;
  s.kfac = KfacOptions{cfg.fisher_mode, derive_seed(seed, kScanKfac)};
  s.seed = derive_seed(seed, kScanEig);
  return s;
}

QuadraticModel full_quadratic(const ExperimentConfig& cfg, const Mlp& model, const Vector& theta,
                              const Dataset& train, std::uint64_t seed) {
  return fullbatch_quadratic(model, theta, train, cfg.curvature, cfg.effective_beta(), cfg.delta,
                             cfg.chunk_size, KfacOptions{cfg.fisher_mode, derive_seed(seed, kScanKfac)});
}

// Eigen scans evaluated only on their own batch and the full batch.
std::vector<ScanReport> same_batch_scans(const ExperimentConfig& cfg, const Mlp& model,
                                         const Vector& theta, const std::vector<Batch>& batches,
                                         const QuadraticModel& full, std::uint64_t seed) {
  const Index k = std::min<Index>(cfg.scan_k, model.num_params());
  std::vector<ScanReport> out;
  const Rng base(derive_seed(seed, kScanEig));
  for (std::size_t m = 0; m < batches.size(); ++m) {
    const KfacOptions kfac{cfg.fisher_mode, Rng(derive_seed(seed, kScanKfac)).split(m).seed()};
    const std::vector<QuadraticModel> one{
        build_quadratic(model, theta, batches[m], cfg.curvature, cfg.effective_beta(), cfg.delta, kfac)};
    Rng rng = base.split(m);
    out.push_back(eigendirection_scan(one.front(), one, full, k, rng).report);
  }
  return out;
}

}  // namespace

std::vector<TrendRow> batch_size_trend(const ExperimentConfig& cfg, const PreparedModel& pm) {
  const Dataset& train = pm.data.train;
  const QuadraticModel full = full_quadratic(cfg, pm.model, pm.theta, train, cfg.seed);
  std::vector<TrendRow> out;
  for (Index bs : cfg.scan_batch_sizes) {
    const Index nb = std::min(cfg.scan_num_batches, train.size() / bs);
    if (nb < 1) throw ValidationError("batch size " + std::to_string(bs) + " exceeds the training set");
    for (std::uint64_t s : cfg.seeds) {
      const auto batches = partition_batches(train, bs, nb, derive_seed(s, kTrend));
      const auto reports = same_batch_scans(cfg, pm.model, pm.theta, batches, full, derive_seed(s, kTrend));
      BiasMetadata meta{bs, pm.model.num_params(), static_cast<double>(cfg.train.epochs), "seed" + std::to_string(s)};
      out.push_back({bs, s, bias_summary(reports, BiasQuantity::slope, meta),
                     bias_summary(reports, BiasQuantity::curvature, meta)});
    }
  }
  return out;
}

BiasScanResult run_bias_scan(const ExperimentConfig& cfg, const PreparedModel& pm) {
  const Dataset& train = pm.data.train;
  const auto batches = partition_batches(train, cfg.scan_batch_size, cfg.scan_num_batches,
                                         derive_seed(cfg.seed, kScanPartition));
  BiasScanResult out;
  ScanSettings s = scan_settings(cfg, cfg.seed);
  s.k = std::min<Index>(s.k, pm.model.num_params());
  out.scans = eigendirection_scan(pm.model, pm.theta, batches, train, s);
  if (cfg.scan_cg_directions > 0) {
    std::vector<QuadraticModel> quads;
    for (std::size_t m = 0; m < batches.size(); ++m) {
      KfacOptions kfac = s.kfac;
      kfac.seed = Rng(s.kfac.seed).split(m).seed();
      quads.push_back(build_quadratic(pm.model, pm.theta, batches[m], s.kind, s.beta, s.delta, kfac));
    }
    const QuadraticModel full = full_quadratic(cfg, pm.model, pm.theta, train, cfg.seed);
    CgConfig cc;
    cc.epsilon = cfg.cg_epsilon;
    out.cg_scan = cg_direction_scan(quads.front(), quads, full, cfg.scan_cg_directions, cc);
  }
  if (!cfg.scan_batch_sizes.empty()) out.trend = batch_size_trend(cfg, pm);
  return out;
}

OverlapResult run_overlap(const ExperimentConfig& cfg, const PreparedModel& pm) {
  const Index nb = std::min<Index>(cfg.scan_num_batches, 4);
  const auto batches = partition_batches(pm.data.train, cfg.scan_batch_size, nb,
                                         derive_seed(cfg.seed, kScanPartition));
  const ScanSettings s = scan_settings(cfg, cfg.seed);
  const Index k = std::min<Index>(s.k, pm.model.num_params());
  OverlapResult out;
  const Rng base(s.seed);
  for (std::size_t m = 0; m < batches.size(); ++m) {
    KfacOptions kfac = s.kfac;
    kfac.seed = Rng(s.kfac.seed).split(m).seed();
    const QuadraticModel q = build_quadratic(pm.model, pm.theta, batches[m], s.kind, s.beta, s.delta, kfac);
    Rng rng = base.split(m);
    const EigenDecomposition eig = top_k_eigenpairs(q.curvature.as_function(), q.dim(), k, rng, s.topk);
    DirectionSet set;
    set.kind = DirectionKind::eigen;
    set.source_batch = q.batch_id;
    for (Index i = 0; i < k; ++i) {
      set.directions.push_back(eig.basis.col(i));
      set.eigenvalues.push_back(eig.eigenvalues(i));
    }
    out.sets.push_back(std::move(set));
  }
  for (const auto& other : out.sets) out.pairs.push_back(overlap_matrix(out.sets.front(), other));
  return out;
}

namespace {

struct Evaluator {
  const Mlp& model;
  Batch train;
  Batch test;
  const QuadraticModel& full;

  void record(CgRun& run, const CgTrace& trace) const {
    for (const auto& theta : trace.iterates) {
      run.full_values.push_back(value(full, theta));
      run.train_loss.push_back(model.loss(theta, train, 0.0));
      run.test_loss.push_back(test.size() ? model.loss(theta, test, 0.0) : std::nan(""));
      run.train_accuracy.push_back(acc(theta, train));
      run.test_accuracy.push_back(test.size() ? acc(theta, test) : std::nan(""));
    }
    run.magnitudes = trace.magnitudes;
    run.termination = trace.termination;
  }

  double acc(const Vector& theta, const Batch& b) const {
    std::vector<int> labels(static_cast<std::size_t>(b.size()));
    for (Index n = 0; n < b.size(); ++n) {
      Index c = 0;
      b.targets.row(n).maxCoeff(&c);
      labels[static_cast<std::size_t>(n)] = static_cast<int>(c);
    }
    return accuracy(ProbTable{softmax_rows(model.forward(theta, b.inputs)), labels});
  }
};

}  // namespace

std::vector<CgRun> run_cg_compare(const ExperimentConfig& cfg, const PreparedModel& pm) {
  const Dataset& train = pm.data.train;
  const double beta = cfg.effective_beta();
  const QuadraticModel full = full_quadratic(cfg, pm.model, pm.theta, train, cfg.seed);
  const Evaluator eval{pm.model, train.all("TRAIN"), pm.data.test.size() ? pm.data.test.all("TEST") : Batch{},
                       full};
  CgConfig cc;
  cc.epsilon = cfg.cg_epsilon;
  cc.max_iterations = cfg.cg_iterations;
  const auto build = [&](const Batch& b, std::uint64_t seed) {
    return build_quadratic(pm.model, pm.theta, b, cfg.curvature, beta, cfg.delta,
                           KfacOptions{cfg.fisher_mode, seed});
  };
  std::vector<CgRun> out;
  for (std::uint64_t s : cfg.seeds) {
    const Batch b = partition_batches(train, cfg.cg_batch_size, 1, derive_seed(s, kCgSingle), "S")[0];
    const QuadraticModel q_single = build(b, derive_seed(s, kCgSingle));
    CgRun single{"single", s};
    const long long before = q_single.curvature.matvec_count();
    const CgTrace st = cg_minimize(q_single, cc);
    single.matvecs = q_single.curvature.matvec_count() - before;
    eval.record(single, st);
    out.push_back(std::move(single));

    DebiasedCgResult res;
    if (cfg.cg_same_batch) {
      const QuadraticModel q_mag = build(b, derive_seed(s, kCgSingle));
      res = debiased_cg(q_single, q_mag, cfg.cg_iterations, cc);
    } else {
      const auto halves = partition_batches(train, cfg.debiased_cg_batch(), 2, derive_seed(s, kCgDebiased), "H");
      res = debiased_cg(build(halves[0], derive_seed(s, kCgDebiased)),
                        build(halves[1], derive_seed(s, kCgDebiased) + 1), cfg.cg_iterations, cc);
    }
    CgRun deb{"debiased", s};
    deb.matvecs = res.matvecs_b + res.matvecs_bt;
    eval.record(deb, res.debiased_trace);
    out.push_back(std::move(deb));

    if (cfg.cg_fullbatch) {
      CgRun fb{"fullbatch", s};
      const long long fb_before = full.curvature.matvec_count();
      eval.record(fb, cg_minimize(full, cc));
      fb.matvecs = full.curvature.matvec_count() - fb_before;
      out.push_back(std::move(fb));

      const auto [first, second] = random_halves(train.size(), derive_seed(s, kCgHalves));
      Dataset da{train.inputs(first, Eigen::all), {}, train.num_classes};
      Dataset db{train.inputs(second, Eigen::all), {}, train.num_classes};
      for (Index i : first) da.labels.push_back(train.labels[static_cast<std::size_t>(i)]);
      for (Index i : second) db.labels.push_back(train.labels[static_cast<std::size_t>(i)]);
      const auto half_q = [&](const Dataset& d, const char* id) {
        return fullbatch_quadratic(pm.model, pm.theta, d, cfg.curvature, beta, cfg.delta, cfg.chunk_size,
                                   KfacOptions{cfg.fisher_mode, derive_seed(s, kCgHalves)}, id);
      };
      const DebiasedCgResult hr = debiased_cg(half_q(da, "HALF_A"), half_q(db, "HALF_B"), cfg.cg_iterations, cc);
      CgRun fbd{"fullbatch_debiased", s};
      fbd.matvecs = hr.matvecs_b + hr.matvecs_bt;
      eval.record(fbd, hr.debiased_trace);
      out.push_back(std::move(fbd));
    }
  }
  return out;
}

std::vector<LaRow> run_laplace_sweep(const ExperimentConfig& cfg, const PreparedModel& pm) {
  const Dataset& train = pm.data.train;
  const Dataset& test = pm.data.test;
  if (test.size() == 0) throw ValidationError("laplace-sweep needs a test split (data.test_fraction > 0)");
  Rng full_rng(derive_seed(cfg.seed, kLaFull));
  const auto full_blocks =
      make_blocks(accumulate_kfac(pm.model, pm.theta, train, cfg.fisher_mode, full_rng, cfg.chunk_size));
  std::vector<LaRow> out;
  for (std::uint64_t s : cfg.seeds) {
    Rng kr(derive_seed(s, kLaKfac));
    const Batch b = partition_batches(train, cfg.la_batch_size, 1, derive_seed(s, kLaSingle), "S")[0];
    const auto single = make_blocks(pm.model.kfac_factors(pm.theta, b, cfg.fisher_mode, kr));
    const auto halves = partition_batches(train, cfg.debiased_la_batch(), 2, derive_seed(s, kLaDebiased), "H");
    const auto ba = make_blocks(pm.model.kfac_factors(pm.theta, halves[0], cfg.fisher_mode, kr));
    const auto bb = make_blocks(pm.model.kfac_factors(pm.theta, halves[1], cfg.fisher_mode, kr));
    const auto debiased = debias_kfac(ba, bb);
    const std::vector<std::pair<std::string, const std::vector<KfacBlock>*>> methods = {
        {"single", &single}, {"debiased", &debiased}, {"fullbatch", &full_blocks}};
    for (const auto& [name, blocks] : methods) {
      for (double beta : cfg.la_grid) {
        const LaplacePosterior post = build_posterior(*blocks, pm.theta, pm.model.layout(), train.size(), beta);
        const Matrix p = predictive(post, pm.model, test.inputs,
                                    PredictiveConfig{cfg.la_samples, derive_seed(s, kLaPredict)});
        const ProbTable t{p, test.labels};
        out.push_back({name, beta, "nll", nll(t), s});
        out.push_back({name, beta, "accuracy", accuracy(t), s});
        out.push_back({name, beta, "ece", ece(t, cfg.ece_bins), s});
        if (pm.data.ood && pm.data.ood->size() > 0) {
          const Matrix po = predictive(post, pm.model, pm.data.ood->inputs,
                                       PredictiveConfig{cfg.la_samples, derive_seed(s, kLaPredictOod)});
          std::vector<double> scores = predictive_entropies(p);
          const std::vector<double> ood_scores = predictive_entropies(po);
          std::vector<bool> positive(scores.size(), false);
          scores.insert(scores.end(), ood_scores.begin(), ood_scores.end());
          positive.resize(scores.size(), true);
          out.push_back({name, beta, "auroc", auroc(scores, positive), s});
        }
      }
    }
  }
  return out;
}

namespace {

std::vector<SeriesRow> series_rows(const ExperimentConfig& cfg, const Mlp& model, const Vector& theta,
                                   const Dataset& train, double epoch, int width) {
  const auto batches = partition_batches(train, cfg.scan_batch_size, cfg.scan_num_batches,
                                         derive_seed(cfg.seed, kSeries));
  const QuadraticModel full = full_quadratic(cfg, model, theta, train, cfg.seed);
  const auto reports = same_batch_scans(cfg, model, theta, batches, full, derive_seed(cfg.seed, kSeries));
  std::vector<SeriesRow> out;
  for (const auto& r : reports) {
    BiasMetadata meta{cfg.scan_batch_size, model.num_params(), epoch, r.source_batch};
    out.push_back({epoch, width, model.num_params(), r.source_batch,
                   bias_summary({r}, BiasQuantity::slope, meta), bias_summary({r}, BiasQuantity::curvature, meta)});
  }
  return out;
}

}  // namespace

std::vector<SeriesRow> run_bias_over_training(const ExperimentConfig& cfg, const PreparedModel& pm) {
  std::vector<SeriesRow> out;
  const int width = cfg.hidden.empty() ? 0 : cfg.hidden.front();
  for (const auto& c : pm.checkpoints) {
    auto rows = series_rows(cfg, pm.model, c.theta, pm.data.train, c.epoch, width);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<SeriesRow> run_size_sweep(const ExperimentConfig& cfg) {
  std::vector<SeriesRow> out;
  for (int w : cfg.widths) {
    const std::vector<int> hidden(std::max<std::size_t>(cfg.hidden.size(), 1), w);
    const PreparedModel pm = prepare_model(cfg, hidden);
    auto rows = series_rows(cfg, pm.model, pm.theta, pm.data.train, cfg.train.epochs, w);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

namespace {

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json summary_json(const BiasSummary& s) {
  return {{"mean", s.mean}, {"p25", s.p25}, {"p50", s.p50}, {"p75", s.p75},
          {"count", s.errors.size()}, {"excluded", s.excluded}};
}

void write_series_csv(const std::vector<SeriesRow>& rows, bool by_width, const std::string& path,
                      const std::string& digest) {
  std::vector<std::string> header = by_width ? std::vector<std::string>{"width", "num_params"}
                                             : std::vector<std::string>{"epoch"};
  for (const char* h : {"batch_id", "quantity", "mean", "p25", "p50", "p75"}) header.emplace_back(h);
  CsvWriter w(path, digest, header);
  for (const auto& r : rows) {
    for (const BiasSummary* s : {&r.slope, &r.curvature}) {
      std::vector<std::string> cells = by_width
                                           ? std::vector<std::string>{std::to_string(r.width), std::to_string(r.num_params)}
                                           : std::vector<std::string>{format_double(r.epoch)};
      cells.push_back(r.batch_id);
      cells.emplace_back(s->quantity == BiasQuantity::slope ? "slope" : "curvature");
      for (double v : {s->mean, s->p25, s->p50, s->p75}) cells.push_back(format_double(v));
      w.row(cells);
    }
  }
  w.close();
}

// Mean over rows sharing the same x of the per-batch mean relative error.
Series series_mean(const std::vector<SeriesRow>& rows, bool by_width, BiasQuantity q) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    const double x = by_width ? static_cast<double>(r.num_params) : r.epoch;
    const double v = q == BiasQuantity::slope ? r.slope.mean : r.curvature.mean;
    auto& a = acc[x];
    a.first += v;
    a.second += 1;
  }
  Series s{q == BiasQuantity::slope ? "slope" : "curvature", {}, {}, false};
  for (const auto& [x, a] : acc) {
    s.x.push_back(x);
    s.y.push_back(a.first / a.second);
  }
  return s;
}

}  // namespace

json run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const std::string digest = cfg.digest();
  json summary = {{"config_digest", digest},
                  {"kind", to_string(cfg.kind)},
                  {"seed", cfg.seed},
                  {"seeds", cfg.seeds},
                  {"data_seed", cfg.data.seed},
                  {"config", cfg.canonical()}};
  std::vector<std::string> files;
  const auto out = [&](const std::string& name) {
    files.push_back(name);
    return join_path(out_dir, name);
  };

  if (cfg.kind == ExperimentKind::size_sweep) {
    const auto rows = run_size_sweep(cfg);
    write_series_csv(rows, true, out("size_sweep.csv"), digest);
    if (cfg.plots) {
      write_line_plot({series_mean(rows, true, BiasQuantity::slope), series_mean(rows, true, BiasQuantity::curvature)},
                      {"Relative bias vs parameter count", "parameters", "mean relative error", true},
                      out("size_sweep.svg"), digest);
    }
    summary["rows"] = rows.size();
    summary["files"] = files;
    write_json(summary, join_path(out_dir, "summary.json"));
    return summary;
  }

  const PreparedModel pm = prepare_model(cfg);
  summary["num_params"] = pm.model.num_params();
  summary["train_size"] = pm.data.train.size();

  switch (cfg.kind) {
    case ExperimentKind::bias_scan: {
      const BiasScanResult r = run_bias_scan(cfg, pm);
      json batches = json::array();
      std::vector<ScanReport> reports;
      for (const auto& s : r.scans) {
        write_scan_csv(s.report, out("scan_" + s.report.source_batch + ".csv"), digest);
        const double same = s.report.same_batch_curvatures()(0);
        const double fullc = s.report.full_curvatures(0);
        batches.push_back({{"batch_id", s.report.source_batch},
                           {"top_eigenvalue", s.directions.eigenvalues.front()},
                           {"top_same_batch_curvature", same},
                           {"top_full_batch_curvature", fullc},
                           {"top_ratio", same / fullc}});
        reports.push_back(s.report);
      }
      summary["source_batches"] = batches;
      summary["curvature_bias"] = summary_json(bias_summary(reports, BiasQuantity::curvature));
      summary["slope_bias"] = summary_json(bias_summary(reports, BiasQuantity::slope));
      if (r.cg_scan) {
        write_scan_csv(r.cg_scan->report, out("cg_scan_" + r.cg_scan->report.source_batch + ".csv"), digest);
        summary["cg_scan_termination"] = to_string(*r.cg_scan->report.termination);
        summary["cg_scan_steps"] = r.cg_scan->report.num_directions();
      }
      if (!r.trend.empty()) {
        CsvWriter w(out("batch_size_trend.csv"), digest, {"batch_size", "seed", "quantity", "mean", "p25", "p50", "p75"});
        for (const auto& t : r.trend) {
          for (const BiasSummary* s : {&t.slope, &t.curvature}) {
            w.row({std::to_string(t.batch_size), std::to_string(t.seed),
                   s->quantity == BiasQuantity::slope ? "slope" : "curvature", format_double(s->mean),
                   format_double(s->p25), format_double(s->p50), format_double(s->p75)});
          }
        }
        w.close();
      }
      if (cfg.plots && !r.scans.empty()) {
        const ScanReport view = display_normalized(r.scans.front().report);
        Series same{"same batch", {}, {}, false}, fullb{"full batch", {}, {}, false}, others{"other batches", {}, {}, true};
        for (Index i = 0; i < view.num_directions(); ++i) {
          same.x.push_back(static_cast<double>(i));
          same.y.push_back(view.same_batch_curvatures()(i));
          fullb.x.push_back(static_cast<double>(i));
          fullb.y.push_back(view.full_curvatures(i));
          for (Index j = 0; j < view.num_batches(); ++j) {
            if (view.same_batch_column && j == *view.same_batch_column) continue;
            others.x.push_back(static_cast<double>(i));
            others.y.push_back(view.curvatures(i, j));
          }
        }
        write_line_plot({same, fullb, others},
                        {"Directional curvature along top eigenvectors of " + view.source_batch, "direction",
                         "curvature", true},
                        out("curvature_scan.svg"), digest);
      }
      break;
    }
    case ExperimentKind::overlap: {
      const OverlapResult r = run_overlap(cfg, pm);
      json pairs = json::array();
      for (const auto& o : r.pairs) {
        const std::string stem = "overlap_" + o.batch_u + "_" + o.batch_v;
        write_overlap_csv(o, out(stem + ".csv"), digest);
        if (cfg.plots) write_overlap_svg(o, out(stem + ".svg"), digest);
        pairs.push_back({{"batch_u", o.batch_u},
                         {"batch_v", o.batch_v},
                         {"captured_mass_mean", o.captured_mass.mean()},
                         {"diagonal_mean", o.omega.diagonal().mean()}});
      }
      summary["pairs"] = pairs;
      break;
    }
    case ExperimentKind::cg_compare: {
      const auto runs = run_cg_compare(cfg, pm);
      CsvWriter w(out("cg_compare.csv"), digest,
                  {"method", "seed", "iteration", "magnitude", "full_value", "train_loss", "train_accuracy",
                   "test_loss", "test_accuracy"});
      json terms = json::array();
      std::vector<Series> series;
      for (const auto& run : runs) {
        Series s{run.method + " " + std::to_string(run.seed), {}, run.full_values, false};
        for (std::size_t p = 0; p < run.full_values.size(); ++p) {
          s.x.push_back(static_cast<double>(p));
          w.row({run.method, std::to_string(run.seed), std::to_string(p),
                 p < run.magnitudes.size() ? format_double(run.magnitudes[p]) : "",
                 format_double(run.full_values[p]), format_double(run.train_loss[p]),
                 format_double(run.train_accuracy[p]), format_double(run.test_loss[p]),
                 format_double(run.test_accuracy[p])});
        }
        series.push_back(std::move(s));
        terms.push_back({{"method", run.method},
                         {"seed", run.seed},
                         {"termination", to_string(run.termination)},
                         {"steps", run.magnitudes.size()},
                         {"matvecs", run.matvecs},
                         {"initial_full_value", run.full_values.front()},
                         {"final_full_value", run.full_values.back()}});
      }
      w.close();
      summary["runs"] = terms;
      if (cfg.plots) {
        write_line_plot(series, {"Full-batch quadratic along CG runs", "iteration", "q(theta; D)", false},
                        out("cg_compare.svg"), digest);
      }
      break;
    }
    case ExperimentKind::laplace_sweep: {
      const auto rows = run_laplace_sweep(cfg, pm);
      CsvWriter w(out("laplace_sweep.csv"), digest, {"method", "beta", "metric", "value", "seed"});
      std::map<std::string, std::map<double, std::pair<double, int>>> nll_mean;
      for (const auto& r : rows) {
        w.row({r.method, format_double(r.beta), r.metric, format_double(r.value), std::to_string(r.seed)});
        if (r.metric == "nll") {
          auto& a = nll_mean[r.method][r.beta];
          a.first += r.value;
          a.second += 1;
        }
      }
      w.close();
      summary["rows"] = rows.size();
      if (cfg.plots) {
        std::vector<Series> series;
        for (const auto& [method, by_beta] : nll_mean) {
          Series s{method, {}, {}, false};
          for (const auto& [beta, a] : by_beta) {
            s.x.push_back(std::log10(beta));
            s.y.push_back(a.first / a.second);
          }
          series.push_back(std::move(s));
        }
        write_line_plot(series, {"Test NLL of the Laplace predictive", "log10 prior precision", "NLL", false},
                        out("laplace_sweep.svg"), digest);
      }
      break;
    }
    case ExperimentKind::bias_over_training: {
      const auto rows = run_bias_over_training(cfg, pm);
      write_series_csv(rows, false, out("bias_over_training.csv"), digest);
      if (cfg.plots) {
        write_line_plot({series_mean(rows, false, BiasQuantity::slope), series_mean(rows, false, BiasQuantity::curvature)},
                        {"Relative bias over training", "epoch", "mean relative error", true},
                        out("bias_over_training.svg"), digest);
      }
      json eps = json::array();
      for (const auto& c : pm.checkpoints) eps.push_back(c.epoch);
      summary["epochs"] = eps;
      summary["rows"] = rows.size();
      break;
    }
    case ExperimentKind::size_sweep: break;
  }
  summary["files"] = files;
  write_json(summary, join_path(out_dir, "summary.json"));
  return summary;
}

VerifyReport verify_results(const std::string& dir) {
  const std::string summary_path = join_path(dir, "summary.json");
  if (!fs::exists(summary_path)) throw ValidationError("no summary.json in '" + dir + "'");
  VerifyReport rep;
  rep.digest = embedded_digest(summary_path);
  if (rep.digest.empty()) throw ValidationError("summary.json carries no config_digest");
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".csv" || ext == ".json" || ext == ".svg") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    const std::string d = embedded_digest(p.string());
    const std::string name = fs::relative(p, dir).string();
    rep.checked.push_back(name);
    if (d.empty()) {
      rep.missing_digest.push_back(name);
    } else if (d != rep.digest) {
      rep.mismatched.push_back(name);
    }
  }
  return rep;
}

}  // namespace mbq

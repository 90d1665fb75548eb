#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>

#include "mbq/config.hpp"
#include "mbq/errors.hpp"
#include "mbq/experiment.hpp"
#include "mbq/metrics.hpp"
#include "mbq/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out_dir = "results";
  std::optional<std::uint64_t> seed_override;
  bool verbose = false;
};

mbq::ExperimentConfig resolve(const Globals& g) {
  mbq::ExperimentConfig cfg = g.config.empty() ? mbq::ExperimentConfig{} : mbq::load_config(g.config);
  if (g.seed_override) cfg.seed = *g.seed_override;
  return cfg;
}

double train_accuracy(const mbq::PreparedModel& pm, const mbq::Vector& theta) {
  const mbq::Matrix p = mbq::softmax_rows(pm.model.forward(theta, pm.data.train.inputs));
  return mbq::accuracy(mbq::ProbTable{p, pm.data.train.labels});
}

int gen_data(const Globals& g) {
  const mbq::ExperimentConfig cfg = resolve(g);
  const std::string digest = cfg.digest();
  const mbq::GeneratedData data = mbq::generate_dataset(cfg.data);
  fs::create_directories(g.out_dir);
  const auto path = [&](const char* name) { return (fs::path(g.out_dir) / name).string(); };
  mbq::write_csv_dataset(data.train, path("train.csv"), digest);
  mbq::write_csv_dataset(data.test, path("test.csv"), digest);
  nlohmann::json summary = {{"config_digest", digest},
                            {"kind", "gen-data"},
                            {"train_size", data.train.size()},
                            {"test_size", data.test.size()}};
  if (data.ood) {
    mbq::write_csv_dataset(*data.ood, path("ood.csv"), digest);
    summary["ood_size"] = data.ood->size();
  }
  mbq::write_json(summary, path("summary.json"));
  std::cout << "wrote " << data.train.size() << " train, " << data.test.size() << " test samples to "
            << g.out_dir << "\n";
  return 0;
}

int train_cmd(const Globals& g) {
  mbq::ExperimentConfig cfg = resolve(g);
  cfg.checkpoint.clear();
  const std::string digest = cfg.digest();
  const mbq::PreparedModel pm = mbq::prepare_model(cfg);
  const fs::path dir = fs::path(g.out_dir) / "checkpoints";
  fs::create_directories(dir);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& c : pm.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", c.epoch);
    mbq::save_checkpoint(c, (dir / name).string());
    epochs.push_back({{"epoch", c.epoch},
                      {"file", std::string("checkpoints/") + name},
                      {"train_loss", pm.model.loss(c.theta, pm.data.train.all("TRAIN"), 0.0)},
                      {"train_accuracy", train_accuracy(pm, c.theta)}});
  }
  mbq::write_json({{"config_digest", digest},
                   {"kind", "train"},
                   {"seed", cfg.seed},
                   {"num_params", pm.model.num_params()},
                   {"checkpoints", epochs}},
                  (fs::path(g.out_dir) / "summary.json").string());
  std::cout << "trained " << pm.model.num_params() << " parameters, final train accuracy "
            << train_accuracy(pm, pm.theta) << "\n";
  return 0;
}

int experiment(const Globals& g, mbq::ExperimentKind kind) {
  mbq::ExperimentConfig cfg = resolve(g);
  cfg.kind = kind;
  const nlohmann::json summary = mbq::run_experiment(cfg, g.out_dir);
  std::cout << mbq::to_string(kind) << ": " << summary["files"].size() << " files written to " << g.out_dir
            << " (digest " << summary["config_digest"].get<std::string>().substr(0, 12) << ")\n";
  return 0;
}

int verify(const Globals& g) {
  const mbq::VerifyReport rep = mbq::verify_results(g.out_dir);
  for (const auto& f : rep.mismatched) std::cout << "MISMATCH " << f << "\n";
  for (const auto& f : rep.missing_digest) std::cout << "MISSING  " << f << "\n";
  std::cout << (rep.ok() ? "OK " : "FAILED ") << rep.checked.size() << " files, digest " << rep.digest << "\n";
  if (!rep.ok()) throw mbq::ValidationError("result directory '" + g.out_dir + "' failed verification");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mini-batch quadratic bias diagnostics, debiased CG and debiased K-FAC Laplace"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment config file")->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "Result directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed-override", seed, "Replace experiment.seed");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  struct Sub {
    const char* name;
    const char* help;
    std::function<int()> run;
  };
  const std::vector<Sub> subs = {
      {"gen-data", "Generate the dataset as CSV", [&] { return gen_data(g); }},
      {"train", "Train the model and write checkpoints", [&] { return train_cmd(g); }},
      {"bias-scan", "Eigendirection slope/curvature scan",
       [&] { return experiment(g, mbq::ExperimentKind::bias_scan); }},
      {"overlap", "Eigenspace overlap matrices", [&] { return experiment(g, mbq::ExperimentKind::overlap); }},
      {"cg-compare", "Single-batch vs debiased CG", [&] { return experiment(g, mbq::ExperimentKind::cg_compare); }},
      {"laplace-sweep", "K-FAC Laplace prior precision sweep",
       [&] { return experiment(g, mbq::ExperimentKind::laplace_sweep); }},
      {"bias-over-training", "Relative bias at each checkpoint",
       [&] { return experiment(g, mbq::ExperimentKind::bias_over_training); }},
      {"size-sweep", "Relative bias across hidden widths",
       [&] { return experiment(g, mbq::ExperimentKind::size_sweep); }},
      {"verify", "Check config digests in a result directory", [&] { return verify(g); }},
  };
  std::vector<CLI::App*> commands;
  for (const auto& s : subs) commands.push_back(app.add_subcommand(s.name, s.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed_override = seed;
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (commands[i]->parsed()) return subs[i].run();
    }
  } catch (const mbq::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mbq::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

#include "mbq/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "mbq/errors.hpp"

namespace mbq {

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::bias_scan: return "bias-scan";
    case ExperimentKind::overlap: return "overlap";
    case ExperimentKind::cg_compare: return "cg-compare";
    case ExperimentKind::laplace_sweep: return "laplace-sweep";
    case ExperimentKind::bias_over_training: return "bias-over-training";
    case ExperimentKind::size_sweep: return "size-sweep";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::bias_scan, ExperimentKind::overlap, ExperimentKind::cg_compare,
                 ExperimentKind::laplace_sweep, ExperimentKind::bias_over_training,
                 ExperimentKind::size_sweep}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown experiment kind '" + s + "'");
}

MlpArchitecture ExperimentConfig::architecture() const {
  MlpArchitecture a;
  a.layer_sizes.push_back(data.d);
  a.layer_sizes.insert(a.layer_sizes.end(), hidden.begin(), hidden.end());
  a.layer_sizes.push_back(data.c);
  a.activation = activation;
  a.loss = loss;
  return a;
}

void ExperimentConfig::validate() const {
  data.validate();
  architecture().validate();
  train.validate();
  if (seeds.empty()) throw ValidationError("experiment.seeds must not be empty");
  if (effective_beta() < 0.0 || delta < 0.0) throw ValidationError("curvature beta/delta must be >= 0");
  if (chunk_size < 1) throw ValidationError("curvature.chunk_size must be >= 1");
  if (scan_batch_size < 1 || scan_num_batches < 1 || scan_k < 1) {
    throw ValidationError("scan batch_size, num_batches and k must be >= 1");
  }
  if (cg_iterations < 1 || !(cg_epsilon > 0.0)) throw ValidationError("cg iterations/epsilon invalid");
  if (cg_batch_size < 1 || debiased_cg_batch() < 1) throw ValidationError("cg batch sizes must be >= 1");
  if (la_grid.empty() || la_samples < 1 || la_batch_size < 1 || debiased_la_batch() < 1) {
    throw ValidationError("laplace grid/samples/batch sizes invalid");
  }
  for (double b : la_grid) {
    if (!(b > 0.0)) throw ValidationError("laplace grid values must be > 0");
  }
  if (ece_bins < 1) throw ValidationError("laplace.ece_bins must be >= 1");
  for (int w : widths) {
    if (w < 1) throw ValidationError("scan.widths must be positive");
  }
}

namespace {

std::string fmt_double(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s << ", ";
    if constexpr (std::is_floating_point_v<T>) {
      s << fmt_double(v[i]);
    } else {
      s << v[i];
    }
  }
  s << ']';
  return s.str();
}

std::string fisher_name(FisherMode m) { return m == FisherMode::mc_sample ? "mc_sample" : "empirical"; }

std::string scope_name(RegularizerScope s) {
  return s == RegularizerScope::weights_only ? "weights_only" : "all_params";
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  const auto line = [&](const char* key, const std::string& value) { o << key << " = " << value << '\n'; };
  line("experiment.kind", to_string(kind));
  line("experiment.seed", std::to_string(seed));
  line("experiment.seeds", join(seeds));
  line("experiment.plots", plots ? "true" : "false");
  line("data.generator", to_string(data.generator));
  line("data.n", std::to_string(data.n));
  line("data.d", std::to_string(data.d));
  line("data.c", std::to_string(data.c));
  line("data.noise", fmt_double(data.noise));
  line("data.test_fraction", fmt_double(data.test_fraction));
  line("data.ood_translation", data.ood_shift ? fmt_double(data.ood_shift->translation) : "none");
  line("data.ood_noise_multiplier", data.ood_shift ? fmt_double(data.ood_shift->noise_multiplier) : "none");
  line("data.seed", std::to_string(data.seed));
  line("data.path", data.path);
  line("model.hidden", join(hidden));
  line("model.activation", to_string(activation));
  line("model.loss", to_string(loss));
  line("model.regularizer", scope_name(regularizer));
  line("model.checkpoint", checkpoint);
  line("train.lr", fmt_double(train.lr));
  line("train.momentum", fmt_double(train.momentum));
  line("train.epochs", std::to_string(train.epochs));
  line("train.batch_size", std::to_string(train.batch_size));
  line("train.beta", fmt_double(train.beta));
  line("curvature.kind", to_string(curvature));
  line("curvature.beta", fmt_double(effective_beta()));
  line("curvature.delta", fmt_double(delta));
  line("curvature.fisher_mode", fisher_name(fisher_mode));
  line("curvature.chunk_size", std::to_string(chunk_size));
  line("scan.batch_size", std::to_string(scan_batch_size));
  line("scan.num_batches", std::to_string(scan_num_batches));
  line("scan.k", std::to_string(scan_k));
  line("scan.cg_directions", std::to_string(scan_cg_directions));
  line("scan.batch_sizes", join(scan_batch_sizes));
  line("scan.widths", join(widths));
  line("cg.iterations", std::to_string(cg_iterations));
  line("cg.epsilon", fmt_double(cg_epsilon));
  line("cg.batch_size", std::to_string(cg_batch_size));
  line("cg.debiased_batch_size", std::to_string(debiased_cg_batch()));
  line("cg.same_batch", cg_same_batch ? "true" : "false");
  line("cg.fullbatch", cg_fullbatch ? "true" : "false");
  line("laplace.grid", join(la_grid));
  line("laplace.samples", std::to_string(la_samples));
  line("laplace.batch_size", std::to_string(la_batch_size));
  line("laplace.debiased_batch_size", std::to_string(debiased_la_batch()));
  line("laplace.ece_bins", std::to_string(ece_bins));
  return o.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

std::string ExperimentConfig::digest() const { return sha256_hex(canonical()); }

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T value{};
  const char* end = s.data() + s.size();
  std::from_chars_result r{};
  if constexpr (std::is_floating_point_v<T>) {
    r = std::from_chars(s.data(), end, value, std::chars_format::general);
  } else {
    r = std::from_chars(s.data(), end, value);
  }
  if (r.ec != std::errc() || r.ptr != end) {
    throw ValidationError("config key '" + key + "': cannot parse '" + s + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + s + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::vector<std::string>&)>;

const std::string& single(const std::string& key, const std::vector<std::string>& in) {
  if (in.size() != 1) throw ValidationError("config key '" + key + "' expects a single value");
  return in.front();
}

template <typename T>
Setter number(T ExperimentConfig::*field) {
  return [field](ExperimentConfig& c, const std::string& k, const std::vector<std::string>& in) {
    c.*field = parse_number<T>(k, single(k, in));
  };
}

template <typename T, typename Get>
Setter nested(Get get) {
  return [get](ExperimentConfig& c, const std::string& k, const std::vector<std::string>& in) {
    get(c) = parse_number<T>(k, single(k, in));
  };
}

template <typename T>
std::vector<T> number_list(const std::string& k, const std::vector<std::string>& in) {
  std::vector<T> out;
  for (const auto& s : in) {
    if (!s.empty()) out.push_back(parse_number<T>(k, s));
  }
  return out;
}

const std::map<std::string, Setter>& setters() {
  using C = ExperimentConfig;
  using S = const std::string&;
  using V = const std::vector<std::string>&;
  static const std::map<std::string, Setter> table = {
      {"experiment.kind", [](C& c, S k, V in) { c.kind = parse_experiment_kind(single(k, in)); }},
      {"experiment.seed", number(&C::seed)},
      {"experiment.seeds", [](C& c, S k, V in) { c.seeds = number_list<std::uint64_t>(k, in); }},
      {"experiment.plots", [](C& c, S k, V in) { c.plots = parse_bool(k, single(k, in)); }},
      {"data.generator", [](C& c, S k, V in) { c.data.generator = parse_generator(single(k, in)); }},
      {"data.n", nested<Index>([](C& c) -> Index& { return c.data.n; })},
      {"data.d", nested<int>([](C& c) -> int& { return c.data.d; })},
      {"data.c", nested<int>([](C& c) -> int& { return c.data.c; })},
      {"data.noise", nested<double>([](C& c) -> double& { return c.data.noise; })},
      {"data.test_fraction", nested<double>([](C& c) -> double& { return c.data.test_fraction; })},
      {"data.ood_translation",
       [](C& c, S k, V in) {
         if (!c.data.ood_shift) c.data.ood_shift = OodShift{};
         c.data.ood_shift->translation = parse_number<double>(k, single(k, in));
       }},
      {"data.ood_noise_multiplier",
       [](C& c, S k, V in) {
         if (!c.data.ood_shift) c.data.ood_shift = OodShift{};
         c.data.ood_shift->noise_multiplier = parse_number<double>(k, single(k, in));
       }},
      {"data.seed", nested<std::uint64_t>([](C& c) -> std::uint64_t& { return c.data.seed; })},
      {"data.path", [](C& c, S k, V in) { c.data.path = single(k, in); }},
      {"model.hidden", [](C& c, S k, V in) { c.hidden = number_list<int>(k, in); }},
      {"model.activation", [](C& c, S k, V in) { c.activation = parse_activation(single(k, in)); }},
      {"model.loss", [](C& c, S k, V in) { c.loss = parse_loss(single(k, in)); }},
      {"model.regularizer",
       [](C& c, S k, V in) {
         const auto& v = single(k, in);
         if (v == "weights_only") {
           c.regularizer = RegularizerScope::weights_only;
         } else if (v == "all_params") {
           c.regularizer = RegularizerScope::all_params;
         } else {
           throw ValidationError("model.regularizer must be weights_only or all_params");
         }
       }},
      {"model.checkpoint", [](C& c, S k, V in) { c.checkpoint = single(k, in); }},
      {"train.lr", nested<double>([](C& c) -> double& { return c.train.lr; })},
      {"train.momentum", nested<double>([](C& c) -> double& { return c.train.momentum; })},
      {"train.epochs", nested<int>([](C& c) -> int& { return c.train.epochs; })},
      {"train.batch_size", nested<Index>([](C& c) -> Index& { return c.train.batch_size; })},
      {"train.beta", nested<double>([](C& c) -> double& { return c.train.beta; })},
      {"curvature.kind", [](C& c, S k, V in) { c.curvature = parse_curvature_kind(single(k, in)); }},
      {"curvature.beta", [](C& c, S k, V in) { c.beta = parse_number<double>(k, single(k, in)); }},
      {"curvature.delta", number(&C::delta)},
      {"curvature.fisher_mode",
       [](C& c, S k, V in) {
         const auto& v = single(k, in);
         if (v == "mc_sample") {
           c.fisher_mode = FisherMode::mc_sample;
         } else if (v == "empirical") {
           c.fisher_mode = FisherMode::empirical;
         } else {
           throw ValidationError("curvature.fisher_mode must be mc_sample or empirical");
         }
       }},
      {"curvature.chunk_size", number(&C::chunk_size)},
      {"scan.batch_size", number(&C::scan_batch_size)},
      {"scan.num_batches", number(&C::scan_num_batches)},
      {"scan.k", number(&C::scan_k)},
      {"scan.cg_directions", number(&C::scan_cg_directions)},
      {"scan.batch_sizes", [](C& c, S k, V in) { c.scan_batch_sizes = number_list<Index>(k, in); }},
      {"scan.widths", [](C& c, S k, V in) { c.widths = number_list<int>(k, in); }},
      {"cg.iterations", number(&C::cg_iterations)},
      {"cg.epsilon", number(&C::cg_epsilon)},
      {"cg.batch_size", number(&C::cg_batch_size)},
      {"cg.debiased_batch_size",
       [](C& c, S k, V in) { c.cg_debiased_batch_size = parse_number<Index>(k, single(k, in)); }},
      {"cg.same_batch", [](C& c, S k, V in) { c.cg_same_batch = parse_bool(k, single(k, in)); }},
      {"cg.fullbatch", [](C& c, S k, V in) { c.cg_fullbatch = parse_bool(k, single(k, in)); }},
      {"laplace.grid", [](C& c, S k, V in) { c.la_grid = number_list<double>(k, in); }},
      {"laplace.samples", number(&C::la_samples)},
      {"laplace.batch_size", number(&C::la_batch_size)},
      {"laplace.debiased_batch_size",
       [](C& c, S k, V in) { c.la_debiased_batch_size = parse_number<Index>(k, single(k, in)); }},
      {"laplace.ece_bins", number(&C::ece_bins)},
  };
  return table;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string key = item.fullname();
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(cfg, key, item.inputs);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mbq

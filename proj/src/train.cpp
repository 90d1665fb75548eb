#include "mbq/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mbq/data.hpp"
#include "mbq/errors.hpp"

namespace mbq {

using nlohmann::json;

void SgdConfig::validate() const {
  if (lr < 0.0) throw ValidationError("sgd: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("sgd: momentum must be in [0, 1)");
  if (epochs < 1) throw ValidationError("sgd: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("sgd: batch_size must be >= 1");
  if (beta < 0.0) throw ValidationError("sgd: beta must be >= 0");
}

std::vector<int> checkpoint_epochs(int epochs) {
  std::set<int> picked;
  for (int i = 0; i < 10; ++i) {
    const double e = std::exp(std::log(static_cast<double>(epochs)) * i / 9.0);
    picked.insert(std::clamp(static_cast<int>(std::lround(e)), 1, epochs));
  }
  picked.insert(epochs);
  return {picked.begin(), picked.end()};
}

void sgd_update(Vector& theta, Vector& velocity, const Vector& grad, double lr, double momentum) {
  velocity = momentum * velocity + grad;
  theta -= lr * velocity;
}

std::vector<Checkpoint> train(const Mlp& model, const Vector& theta0, const Dataset& data,
                              const SgdConfig& cfg, Rng& rng, const std::string& digest) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("train: empty dataset");
  const std::vector<int> marks = checkpoint_epochs(cfg.epochs);
  std::size_t next_mark = 0;
  Vector theta = theta0;
  Vector velocity = Vector::Zero(theta.size());
  std::vector<Checkpoint> out;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<Index> order = shuffled_indices(data.size(), rng);
    for (Index start = 0; start < data.size(); start += cfg.batch_size) {
      const Index end = std::min(data.size(), start + cfg.batch_size);
      const std::vector<Index> idx(order.begin() + start, order.begin() + end);
      const LossAndGrad lg = model.loss_and_grad(theta, data.subset(idx, "sgd"), cfg.beta);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
        throw NumericalError("training diverged in epoch " + std::to_string(epoch) +
                             " (non-finite loss)");
      }
      sgd_update(theta, velocity, lg.gradient, cfg.lr, cfg.momentum);
    }
    if (next_mark < marks.size() && marks[next_mark] == epoch) {
      Checkpoint c;
      c.epoch = epoch;
      c.theta = theta;
      c.arch = model.architecture();
      c.scope = model.regularizer_scope();
      c.config_digest = digest;
      c.rng_seed = rng.seed();
      c.rng_counter = rng.counter();
      out.push_back(std::move(c));
      ++next_mark;
    }
  }
  return out;
}

namespace {

const char* role_name(ParamRole r) { return r == ParamRole::weight ? "weight" : "bias"; }

json layout_json(const ParamLayout& layout) {
  json blocks = json::array();
  for (const auto& b : layout.blocks()) {
    blocks.push_back({{"layer", b.layer},
                      {"role", role_name(b.role)},
                      {"shape", {b.rows, b.cols}},
                      {"offset", b.offset}});
  }
  return blocks;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  const ParamLayout layout(ckpt.arch);
  if (ckpt.theta.size() != layout.size()) throw ValidationError("checkpoint: theta does not match layout");
  json meta = {
      {"format", "mbq-checkpoint"},
      {"version", ckpt.version},
      {"epoch", ckpt.epoch},
      {"arch",
       {{"layer_sizes", ckpt.arch.layer_sizes},
        {"activation", to_string(ckpt.arch.activation)},
        {"loss", to_string(ckpt.arch.loss)}}},
      {"regularizer", ckpt.scope == RegularizerScope::weights_only ? "weights_only" : "all_params"},
      {"layout", layout_json(layout)},
      {"num_params", layout.size()},
      {"config_digest", ckpt.config_digest},
      {"rng", {{"seed", ckpt.rng_seed}, {"counter", ckpt.rng_counter}}},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  out << meta.dump() << '\n';
  out.write(reinterpret_cast<const char*>(ckpt.theta.data()),
            static_cast<std::streamsize>(ckpt.theta.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("checkpoint '" + path + "' is empty");
  json meta;
  try {
    meta = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint '" + path + "': bad metadata line: " + e.what());
  }
  if (meta.value("format", "") != "mbq-checkpoint") throw ValidationError("not a checkpoint file: " + path);
  const int version = meta.value("version", -1);
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  try {
    c.version = version;
    c.epoch = meta.at("epoch").get<int>();
    c.arch.layer_sizes = meta.at("arch").at("layer_sizes").get<std::vector<int>>();
    c.arch.activation = parse_activation(meta.at("arch").at("activation").get<std::string>());
    c.arch.loss = parse_loss(meta.at("arch").at("loss").get<std::string>());
    c.scope = meta.at("regularizer").get<std::string>() == "all_params" ? RegularizerScope::all_params
                                                                       : RegularizerScope::weights_only;
    c.config_digest = meta.at("config_digest").get<std::string>();
    c.rng_seed = meta.at("rng").at("seed").get<std::uint64_t>();
    c.rng_counter = meta.at("rng").at("counter").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint '" + path + "': " + e.what());
  }
  const ParamLayout layout(c.arch);
  if (meta.at("num_params").get<Index>() != layout.size() || meta.at("layout") != layout_json(layout)) {
    throw ValidationError("checkpoint '" + path + "': layout does not match architecture");
  }
  c.theta.resize(layout.size());
  in.read(reinterpret_cast<char*>(c.theta.data()),
          static_cast<std::streamsize>(c.theta.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(c.theta.size() * sizeof(double))) {
    throw ValidationError("checkpoint '" + path + "' is truncated");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("checkpoint '" + path + "' has trailing bytes");
  }
  return c;
}

}  // namespace mbq

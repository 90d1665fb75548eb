#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbq/model.hpp"

namespace mbq {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  int epochs = 100;
  Index batch_size = 32;
  double beta = 5e-4;

  void validate() const;
};

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int epoch = 0;
  Vector theta;
  MlpArchitecture arch;
  RegularizerScope scope = RegularizerScope::weights_only;
  std::string config_digest;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  int version = kCheckpointVersion;
};

/// Up to 10 log-spaced epochs in [1, epochs], always ending with the final one.
std::vector<int> checkpoint_epochs(int epochs);

/// v <- momentum v + grad; theta <- theta - lr v.
void sgd_update(Vector& theta, Vector& velocity, const Vector& grad, double lr, double momentum);

/// Minibatch SGD on the regularized loss, reshuffling every epoch. Throws
/// NumericalError naming the epoch if the loss becomes non-finite.
std::vector<Checkpoint> train(const Mlp& model, const Vector& theta0, const Dataset& data,
                              const SgdConfig& cfg, Rng& rng, const std::string& digest = "");

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mbq

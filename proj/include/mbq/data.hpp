#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbq/model.hpp"

namespace mbq {

enum class Generator { gaussian_blobs, two_arcs, spirals, csv_file };

std::string to_string(Generator g);
Generator parse_generator(const std::string& s);

struct OodShift {
  double translation = 0.0;
  double noise_multiplier = 1.0;
};

struct DatasetSpec {
  Generator generator = Generator::gaussian_blobs;
  Index n = 0;  // total samples before the train/test split
  int d = 2;
  int c = 2;
  double noise = 0.0;
  double test_fraction = 0.25;
  std::optional<OodShift> ood_shift;
  std::uint64_t seed = 0;
  std::string path;  // csv_file only

  void validate() const;
};

struct GeneratedData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> ood;
};

/// Deterministic given spec.seed. Labels are balanced within one per class.
/// Extra input dimensions beyond the generator's native two are Gaussian
/// noise for two_arcs and spirals.
GeneratedData generate_dataset(const DatasetSpec& spec);

/// Header x0,...,x{D-1},label; labels 0-based. Leading `#` lines are skipped.
Dataset load_csv_dataset(const std::string& path, int num_classes = 0);
/// Prefixes `# config_digest=<hex>` when digest is non-empty.
void write_csv_dataset(const Dataset& data, const std::string& path, const std::string& digest = "");

/// Seeded shuffle of [0, n) cut into consecutive disjoint batches.
std::vector<Batch> partition_batches(const Dataset& data, Index batch_size, Index num_batches,
                                     std::uint64_t seed, const std::string& prefix = "B");

/// Seeded random split of the training indices into two halves.
std::pair<std::vector<Index>, std::vector<Index>> random_halves(Index n, std::uint64_t seed);

std::vector<Index> shuffled_indices(Index n, Rng& rng);

}  // namespace mbq

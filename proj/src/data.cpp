#include "mbq/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mbq/errors.hpp"

namespace mbq {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::gaussian_blobs: return "gaussian_blobs";
    case Generator::two_arcs: return "two_arcs";
    case Generator::spirals: return "spirals";
    case Generator::csv_file: return "csv_file";
  }
  return "?";
}

Generator parse_generator(const std::string& s) {
  if (s == "gaussian_blobs") return Generator::gaussian_blobs;
  if (s == "two_arcs") return Generator::two_arcs;
  if (s == "spirals") return Generator::spirals;
  if (s == "csv_file") return Generator::csv_file;
  throw ValidationError("unsupported generator '" + s + "'");
}

void DatasetSpec::validate() const {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must be in [0, 1)");
  }
  if (generator == Generator::csv_file) {
    if (path.empty()) throw ValidationError("csv_file generator needs a path");
    return;
  }
  if (c < 2) throw ValidationError("dataset needs at least 2 classes");
  if (n < c) throw ValidationError("dataset size n must be >= number of classes");
  if (d < 1) throw ValidationError("input dimension must be >= 1");
  if (generator != Generator::gaussian_blobs && d < 2) {
    throw ValidationError(to_string(generator) + " needs d >= 2");
  }
  if (generator == Generator::two_arcs && c != 2) throw ValidationError("two_arcs has exactly 2 classes");
  if (noise < 0.0) throw ValidationError("noise must be nonnegative");
}

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

namespace {

// Class centers and sample draws for each generator. `noise_scale` lets the
// OOD set reuse the test distribution with inflated noise.
class Sampler {
 public:
  Sampler(const DatasetSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.generator == Generator::gaussian_blobs) {
      // Centers on a sphere of radius 3, far apart relative to unit noise.
      means_.resize(spec.c, spec.d);
      for (int k = 0; k < spec.c; ++k) {
        Vector m = standard_normal(rng, spec.d);
        means_.row(k) = 3.0 * m.transpose() / m.norm();
      }
    }
  }

  Vector draw(int label, double noise_scale, Rng& rng) const {
    const double sigma = spec_.noise * noise_scale;
    Vector x = Vector::Zero(spec_.d);
    switch (spec_.generator) {
      case Generator::gaussian_blobs:
        x = means_.row(label).transpose() + sigma * standard_normal(rng, spec_.d);
        return x;
      case Generator::two_arcs: {
        const double t = std::numbers::pi * rng.uniform();
        if (label == 0) {
          x(0) = std::cos(t);
          x(1) = std::sin(t);
        } else {
          x(0) = 1.0 - std::cos(t);
          x(1) = 0.5 - std::sin(t);
        }
        break;
      }
      case Generator::spirals: {
        const double r = rng.uniform();
        const double angle = 4.0 * r + 2.0 * std::numbers::pi * label / spec_.c;
        x(0) = r * std::cos(angle);
        x(1) = r * std::sin(angle);
        break;
      }
      case Generator::csv_file: break;
    }
    for (Index i = 0; i < x.size(); ++i) x(i) += sigma * rng.normal();
    return x;
  }

 private:
  const DatasetSpec& spec_;
  Matrix means_;
};

Dataset draw_set(const Sampler& sampler, const DatasetSpec& spec, Index n, double noise_scale,
                 Rng& rng) {
  Dataset out;
  out.num_classes = spec.c;
  out.inputs.resize(n, spec.d);
  out.labels.resize(static_cast<std::size_t>(n));
  std::vector<Index> order = shuffled_indices(n, rng);
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(order[static_cast<std::size_t>(i)] % spec.c);
    out.labels[static_cast<std::size_t>(i)] = label;
    out.inputs.row(i) = sampler.draw(label, noise_scale, rng).transpose();
  }
  return out;
}

Dataset take_rows(const Dataset& data, Index begin, Index end) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.inputs = data.inputs.middleRows(begin, end - begin);
  out.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  return out;
}

}  // namespace

GeneratedData generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  GeneratedData out;
  if (spec.generator == Generator::csv_file) {
    const Dataset all = load_csv_dataset(spec.path, spec.c);
    const Index n = all.size();
    const auto n_test = static_cast<Index>(std::floor(spec.test_fraction * static_cast<double>(n)));
    out.train = take_rows(all, 0, n - n_test);
    out.test = take_rows(all, n - n_test, n);
    return out;
  }
  const Rng root(spec.seed);
  Rng means_rng = root.split(0);
  Rng data_rng = root.split(1);
  const Sampler sampler(spec, means_rng);
  const Dataset all = draw_set(sampler, spec, spec.n, 1.0, data_rng);
  const auto n_test = static_cast<Index>(std::floor(spec.test_fraction * static_cast<double>(spec.n)));
  out.train = take_rows(all, 0, spec.n - n_test);
  out.test = take_rows(all, spec.n - n_test, spec.n);
  if (spec.ood_shift && n_test > 0) {
    Rng ood_rng = root.split(2);
    Dataset ood = draw_set(sampler, spec, n_test, spec.ood_shift->noise_multiplier, ood_rng);
    Vector u = standard_normal(ood_rng, spec.d);
    u /= u.norm();
    ood.inputs.rowwise() += spec.ood_shift->translation * u.transpose();
    out.ood = std::move(ood);
  }
  return out;
}

Dataset load_csv_dataset(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file '" + path + "'");
  std::string line;
  do {
    if (!std::getline(in, line)) throw ValidationError("dataset file '" + path + "' is empty");
  } while (!line.empty() && line.front() == '#');
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") {
    throw ValidationError("dataset header must be x0,...,x{D-1},label");
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j)) {
      throw ValidationError("dataset header column " + std::to_string(j) + " must be x" +
                            std::to_string(j));
    }
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(d + 1) + " fields");
    }
    try {
      for (int j = 0; j < d; ++j) {
        std::size_t used = 0;
        row.push_back(std::stod(cells[static_cast<std::size_t>(j)], &used));
        if (used != cells[static_cast<std::size_t>(j)].size()) throw std::invalid_argument("trailing");
      }
      std::size_t used = 0;
      const int label = std::stoi(cells.back(), &used);
      if (used != cells.back().size() || label < 0) throw std::invalid_argument("label");
      labels.push_back(label);
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed value");
    }
    rows.push_back(std::move(row));
  }
  Dataset out;
  out.inputs.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) out.inputs(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  out.labels = std::move(labels);
  int max_label = -1;
  for (int y : out.labels) max_label = std::max(max_label, y);
  out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (max_label >= out.num_classes) throw ValidationError("dataset label exceeds the class count");
  return out;
}

void write_csv_dataset(const Dataset& data, const std::string& path, const std::string& digest) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  if (!digest.empty()) out << "# config_digest=" << digest << '\n';
  for (Index j = 0; j < data.input_dim(); ++j) out << 'x' << j << ',';
  out << "label\n";
  out.precision(17);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.input_dim(); ++j) out << data.inputs(i, j) << ',';
    out << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<Batch> partition_batches(const Dataset& data, Index batch_size, Index num_batches,
                                     std::uint64_t seed, const std::string& prefix) {
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (num_batches < 1 || batch_size * num_batches > data.size()) {
    throw ValidationError("cannot cut " + std::to_string(num_batches) + " disjoint batches of " +
                          std::to_string(batch_size) + " from " + std::to_string(data.size()) +
                          " samples");
  }
  Rng rng(seed);
  const std::vector<Index> order = shuffled_indices(data.size(), rng);
  std::vector<Batch> out;
  for (Index m = 0; m < num_batches; ++m) {
    std::vector<Index> idx(order.begin() + m * batch_size, order.begin() + (m + 1) * batch_size);
    out.push_back(data.subset(idx, prefix + std::to_string(m)));
  }
  return out;
}

std::pair<std::vector<Index>, std::vector<Index>> random_halves(Index n, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<Index> order = shuffled_indices(n, rng);
  const Index half = n / 2;
  return {std::vector<Index>(order.begin(), order.begin() + half),
          std::vector<Index>(order.begin() + half, order.end())};
}

}  // namespace mbq

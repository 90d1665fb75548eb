#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>

#include "mbq/data.hpp"
#include "mbq/linalg.hpp"
#include "mbq/model.hpp"
#include "mbq/rng.hpp"

namespace mbq::test {

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

inline Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Matrix random_spd(Rng& rng, Index n, double shift = 1.0) {
  const Matrix x = random_matrix(rng, n, n);
  return x * x.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
}

inline Matrix random_orthogonal(Rng& rng, Index n) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
  return qr.householderQ() * Matrix::Identity(n, n);
}

inline Matrix dense_kron(const Matrix& a, const Matrix& b) { return Eigen::kroneckerProduct(a, b).eval(); }

// Random classification batch with labels cycling through the classes.
inline Batch random_batch(Rng& rng, Index n, int d, int c, const std::string& id = "T") {
  Dataset ds;
  ds.inputs = random_matrix(rng, n, d);
  ds.num_classes = c;
  for (Index i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % c));
  return ds.all(id);
}

inline Dataset random_dataset(Rng& rng, Index n, int d, int c) {
  Dataset ds;
  ds.inputs = random_matrix(rng, n, d);
  ds.num_classes = c;
  for (Index i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c))));
  return ds;
}

inline Vector random_unit(Rng& rng, Index n) {
  Vector v = standard_normal(rng, n);
  return v / v.norm();
}

}  // namespace mbq::test

#include <gtest/gtest.h>

#include "mbq/errors.hpp"
#include "mbq/quadratic.hpp"
#include "support.hpp"

using namespace mbq;
using namespace mbq::test;

namespace {

struct Fixture {
  Mlp model{{{4, 6, 3}, Activation::tanh, LossKind::cross_entropy}};
  Rng rng{31};
  Vector theta = model.init_params(rng);
  Dataset data = random_dataset(rng, 48, 4, 3);
};

Matrix dense_curvature(const QuadraticModel& q) { return materialize(q.curvature.as_function(), q.dim()); }

}  // namespace

TEST(BuildQuadratic, AnchorFieldsMatchLoss) {
  Fixture f;
  const Batch b = f.data.all("B");
  const auto q = build_quadratic(f.model, f.theta, b, CurvatureKind::ggn, 0.01, 0.0);
  const auto lg = f.model.loss_and_grad(f.theta, b, 0.01);
  EXPECT_EQ(q.constant, lg.loss);
  EXPECT_EQ(q.gradient, lg.gradient);
  EXPECT_EQ(value(q, f.theta), q.constant);
  EXPECT_EQ(grad_at(q, f.theta), q.gradient);
  EXPECT_EQ(q.curvature.matvec_count(), 0);
}

TEST(BuildQuadratic, DampingShiftsCurvatureExactly) {
  Fixture f;
  const Batch b = f.data.all("B");
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn, CurvatureKind::kfac}) {
    const auto q0 = build_quadratic(f.model, f.theta, b, kind, 0.01, 0.0);
    const auto q1 = build_quadratic(f.model, f.theta, b, kind, 0.01, 0.5);
    for (int i = 0; i < 5; ++i) {
      const Vector d = random_unit(f.rng, f.theta.size());
      EXPECT_NEAR(directional_curvature(q1, d) - directional_curvature(q0, d), 0.5, 1e-13);
    }
  }
}

TEST(BuildQuadratic, CurvatureMatchesModelProducts) {
  Fixture f;
  const Batch b = f.data.all("B");
  const Vector v = standard_normal(f.rng, f.theta.size());
  const auto qh = build_quadratic(f.model, f.theta, b, CurvatureKind::hessian, 0.02, 0.0);
  const auto qg = build_quadratic(f.model, f.theta, b, CurvatureKind::ggn, 0.02, 0.0);
  EXPECT_EQ(qh.curvature(v), f.model.hvp(f.theta, b, 0.02, v));
  EXPECT_EQ(qg.curvature(v), f.model.ggn_vp(f.theta, b, 0.02, v));
}

TEST(BuildQuadratic, KfacOperatorIsBlockDiagonalKronecker) {
  Fixture f;
  const Batch b = f.data.all("B");
  const auto q = build_quadratic(f.model, f.theta, b, CurvatureKind::kfac, 0.1, 0.0,
                                 KfacOptions{FisherMode::empirical, 0});
  Rng r(0);
  const auto factors = f.model.kfac_factors(f.theta, b, FisherMode::empirical, r);
  Matrix expected = Matrix::Zero(f.theta.size(), f.theta.size());
  for (const auto& fac : factors) {
    const auto& blk = f.model.layout().weight(fac.layer);
    expected.block(blk.offset, blk.offset, blk.size(), blk.size()) = dense_kron(fac.a, fac.b);
  }
  expected += 0.1 * Matrix(f.model.layout().weight_mask_vector().asDiagonal());
  EXPECT_LT(rel_err(dense_curvature(q), expected), 1e-13);
}

TEST(CurvatureOperator, SymmetricAndPositiveDefiniteOnWeights) {
  Fixture f;
  const Batch b = f.data.all("B");
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn, CurvatureKind::kfac}) {
    const auto q = build_quadratic(f.model, f.theta, b, kind, 0.05, 0.0);
    const Vector u = standard_normal(f.rng, f.theta.size()), v = standard_normal(f.rng, f.theta.size());
    EXPECT_LT(rel_err(u.dot(q.curvature(v)), v.dot(q.curvature(u))), 1e-10);
  }
  const auto qg = build_quadratic(f.model, f.theta, b, CurvatureKind::ggn, 0.05, 0.0);
  const Vector mask = f.model.layout().weight_mask_vector();
  for (int i = 0; i < 10; ++i) {
    const Vector d = random_unit(f.rng, f.theta.size());
    EXPECT_GE(directional_curvature(qg, d), 0.05 * d.cwiseProduct(mask).squaredNorm() - 1e-14);
  }
  const auto qd = build_quadratic(f.model, f.theta, b, CurvatureKind::ggn, 0.0, 0.3);
  EXPECT_GE(directional_curvature(qd, random_unit(f.rng, f.theta.size())), 0.3 - 1e-14);
}

TEST(GradAt, AffineAndDenseOracle) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.2);
  ASSERT_LE(q.dim(), 100);
  const Vector u = standard_normal(f.rng, q.dim());
  const Vector g0 = grad_at(q, f.theta);
  const Vector lhs = grad_at(q, f.theta + 2 * u) - g0;
  const Vector rhs = 2 * (grad_at(q, f.theta + u) - g0);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  const Matrix h = f.model.layout().weight_mask_vector().asDiagonal();
  Matrix dense = materialize([&](const Vector& v) -> Vector { return f.model.ggn_vp(f.theta, f.data.all(), 0.0, v); }, q.dim());
  dense += 0.01 * h + 0.2 * Matrix::Identity(q.dim(), q.dim());
  const Vector theta = f.theta + standard_normal(f.rng, q.dim());
  EXPECT_LE((grad_at(q, theta) - (dense * (theta - f.theta) + q.gradient)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Directional, EigenvectorCurvatureIsEigenvalue) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.0);
  const auto e = sym_eigh(DenseSymMatrix::symmetrized(dense_curvature(q)));
  for (Index i : {Index(0), Index(3), q.dim() - 1}) {
    EXPECT_NEAR(directional_curvature(q, e.basis.col(i)), e.eigenvalues(i), 1e-12);
  }
}

TEST(Directional, SteepestDescentSlope) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.0);
  const Vector d = -q.gradient / q.gradient.norm();
  EXPECT_NEAR(directional_slope(q, f.theta, d), -q.gradient.norm(), 1e-14);
}

TEST(Directional, StencilsOnExactCut) {
  Fixture f;
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn}) {
    const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), kind, 0.01, 0.0);
    const Vector theta = f.theta + 0.3 * standard_normal(f.rng, q.dim());
    const Vector d = random_unit(f.rng, q.dim());
    const double h = 1e-3;
    const auto r = [&](double tau) { return value(q, theta + tau * d); };
    const double slope = (r(h) - r(-h)) / (2 * h);
    const double curv = (r(h) - 2 * r(0) + r(-h)) / (h * h);
    EXPECT_LT(rel_err(slope, directional_slope(q, theta, d)), 1e-6);
    EXPECT_LT(rel_err(curv, directional_curvature(q, d)), 1e-6);
    // Exact cut identity.
    for (double tau : {-2.0, 0.7, 5.0}) {
      const double expected = 0.5 * tau * tau * directional_curvature(q, d) + tau * directional_slope(q, theta, d) + r(0);
      EXPECT_LT(rel_err(r(tau), expected), 1e-10);
    }
  }
}

TEST(Directional, RejectsNonUnitDirection) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.0);
  EXPECT_THROW(directional_curvature(q, 2.0 * random_unit(f.rng, q.dim())), ValidationError);
  EXPECT_THROW(directional_slope(q, f.theta, Vector::Zero(q.dim())), ValidationError);
}

TEST(SubspaceEval, AnchorAndDirectEvaluation) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.0);
  Eigen::HouseholderQR<Matrix> qr(random_matrix(f.rng, q.dim(), 2));
  const Matrix u = qr.householderQ() * Matrix::Identity(q.dim(), 2);
  std::vector<SubspacePoint> grid{{0, 0}};
  for (double a : {-1.5, 0.25, 2.0})
    for (double b : {-0.5, 1.0}) grid.push_back({a, b});
  const long long before = q.curvature.matvec_count();
  const auto vals = subspace_eval(q, f.theta, u.col(0), u.col(1), grid);
  EXPECT_EQ(q.curvature.matvec_count() - before, 2);
  EXPECT_EQ(vals[0], q.constant);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector th = f.theta + grid[i].tau1 * u.col(0) + grid[i].tau2 * u.col(1);
    EXPECT_LT(rel_err(vals[i], value(q, th)), 1e-10);
  }
  const Vector star = f.theta + 0.1 * standard_normal(f.rng, q.dim());
  const auto off = subspace_eval(q, star, u.col(0), u.col(1), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector th = star + grid[i].tau1 * u.col(0) + grid[i].tau2 * u.col(1);
    EXPECT_LT(rel_err(off[i], value(q, th)), 1e-10);
  }
}

TEST(SubspaceEval, EvenSurfaceWithoutLinearTerms) {
  Matrix h = Matrix::Zero(4, 4);
  h.diagonal() << 2, 3, 1, 5;
  QuadraticModel q{Vector::Zero(4), 1.0, (Vector(4) << 0, 0, 1, -2).finished(), CurvatureOperator::dense(h), "S"};
  const auto vals = subspace_eval(q, q.anchor, Vector::Unit(4, 0), Vector::Unit(4, 1),
                                  {{0.5, 1.0}, {-0.5, 1.0}, {0.5, -1.0}, {-0.5, -1.0}});
  for (double v : vals) EXPECT_EQ(v, vals[0]);
}

TEST(SubspaceEval, RejectsNonOrthonormal) {
  Fixture f;
  const auto q = build_quadratic(f.model, f.theta, f.data.all("B"), CurvatureKind::ggn, 0.01, 0.0);
  const Vector u = random_unit(f.rng, q.dim());
  Vector v = random_unit(f.rng, q.dim());
  EXPECT_THROW(subspace_eval(q, f.theta, u, v, {{0, 0}}), ValidationError);
  EXPECT_THROW(subspace_eval(q, f.theta, u, u, {{0, 0}}), ValidationError);
}

TEST(Fullbatch, SingleChunkIdenticalToBuild) {
  Fixture f;
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn, CurvatureKind::kfac}) {
    const KfacOptions ko{FisherMode::mc_sample, 9};
    const auto qb = build_quadratic(f.model, f.theta, f.data.all(), kind, 0.01, 0.1, ko);
    const auto qf = fullbatch_quadratic(f.model, f.theta, f.data, kind, 0.01, 0.1, f.data.size(), ko);
    EXPECT_EQ(qb.constant, qf.constant);
    EXPECT_EQ(qb.gradient, qf.gradient);
    const Vector v = standard_normal(f.rng, f.theta.size());
    EXPECT_EQ(qb.curvature(v), qf.curvature(v)) << to_string(kind);
  }
}

TEST(Fullbatch, ChunkSizeIndependence) {
  Fixture f;
  const Vector v = standard_normal(f.rng, f.theta.size());
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn}) {
    const auto ref = fullbatch_quadratic(f.model, f.theta, f.data, kind, 0.01, 0.0, f.data.size());
    for (Index chunk : {1, 7}) {
      const auto q = fullbatch_quadratic(f.model, f.theta, f.data, kind, 0.01, 0.0, chunk);
      EXPECT_NEAR(q.constant, ref.constant, 1e-12);
      EXPECT_LE((q.gradient - ref.gradient).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((q.curvature(v) - ref.curvature(v)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Fullbatch, BatchMeanIdentity) {
  Fixture f;
  const auto batches = partition_batches(f.data, 8, 6, 3);
  for (auto kind : {CurvatureKind::hessian, CurvatureKind::ggn}) {
    const auto full = fullbatch_quadratic(f.model, f.theta, f.data, kind, 0.01, 0.0, 16);
    std::vector<QuadraticModel> qs;
    for (const auto& b : batches) qs.push_back(build_quadratic(f.model, f.theta, b, kind, 0.01, 0.0));
    for (int t = 0; t < 5; ++t) {
      const Vector d = random_unit(f.rng, f.theta.size());
      double ms = 0, mc = 0;
      for (const auto& q : qs) {
        ms += directional_slope(q, f.theta, d) / 6.0;
        mc += directional_curvature(q, d) / 6.0;
      }
      EXPECT_LT(rel_err(ms, directional_slope(full, f.theta, d)), 1e-10);
      EXPECT_LT(rel_err(mc, directional_curvature(full, d)), 1e-10);
    }
  }
}

TEST(Fullbatch, KfacBatchMeanIdentityDoesNotHoldInGeneral) {
  Fixture f;
  const auto batches = partition_batches(f.data, 8, 6, 3);
  const KfacOptions ko{FisherMode::empirical, 0};
  const auto full = fullbatch_quadratic(f.model, f.theta, f.data, CurvatureKind::kfac, 0.0, 0.0, 48, ko);
  const Vector d = random_unit(f.rng, f.theta.size());
  double mc = 0;
  for (const auto& b : batches) mc += directional_curvature(build_quadratic(f.model, f.theta, b, CurvatureKind::kfac, 0.0, 0.0, ko), d) / 6.0;
  EXPECT_GT(rel_err(mc, directional_curvature(full, d)), 1e-6);
}

TEST(Fullbatch, EmptyDatasetAndBadChunk) {
  Fixture f;
  Dataset empty;
  empty.inputs.resize(0, 4);
  empty.num_classes = 3;
  EXPECT_THROW(fullbatch_quadratic(f.model, f.theta, empty, CurvatureKind::ggn, 0, 0, 4), ValidationError);
  EXPECT_THROW(fullbatch_quadratic(f.model, f.theta, f.data, CurvatureKind::ggn, 0, 0, 0), ValidationError);
}

TEST(CurvatureKind, ParseRoundTrip) {
  for (auto k : {CurvatureKind::hessian, CurvatureKind::ggn, CurvatureKind::kfac})
    EXPECT_EQ(parse_curvature_kind(to_string(k)), k);
  EXPECT_THROW(parse_curvature_kind("fisher"), ValidationError);
}

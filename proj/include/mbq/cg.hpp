#pragma once

#include <string>
#include <vector>

#include "mbq/quadratic.hpp"

namespace mbq {

enum class Termination { max_iter, tolerance, negative_curvature };
std::string to_string(Termination t);

struct CgConfig {
  double epsilon = 1e-10;  // stop once ‖r‖ <= epsilon
  int max_iterations = 100;

  void validate() const;
};

struct CgTrace {
  std::vector<Vector> iterates;       // theta_0 .. theta_K
  std::vector<Vector> directions;     // d_0 .. d_{K-1}, unit norm
  std::vector<double> magnitudes;     // tau_0 .. tau_{K-1}
  std::vector<double> residual_norms; // ‖r_0‖ .. ‖r_K‖ (gradient norms of the quadratic)
  std::vector<double> cg_betas;       // beta_1 .. beta_K
  std::vector<Vector> gradients;      // optional, quadratic gradients at each iterate
  Termination termination = Termination::max_iter;

  int steps() const noexcept { return static_cast<int>(magnitudes.size()); }
  const Vector& last() const { return iterates.back(); }
};

/// Conjugate gradients from x_0 = 0 with one curvature matvec per step.
/// Directions are normalized; tau_p = -(d_p . r_p) / (d_p . H d_p), which is
/// alpha_p ‖s_p‖. Stops without stepping when d_p . H d_p <= 0.
CgTrace cg_minimize(const QuadraticModel& q, const CgConfig& config, bool keep_gradients = false);

enum class DebiasMode { interleaved, sequential };

struct DebiasedCgResult {
  CgTrace direction_trace;  // plain CG on q_b
  CgTrace debiased_trace;   // same directions, magnitudes measured on q_bt
  long long matvecs_b = 0;
  long long matvecs_bt = 0;
};

/// Runs at most k CG steps on q_b and re-measures each step length on q_bt,
/// tracking grad q_bt along the debiased path by the recursion
/// g_{p+1} = g_p + tau~_p H~ d_p. Curvature on q_bt that is <= 0 or below
/// 1e-14 in magnitude stops both traces with negative_curvature.
DebiasedCgResult debiased_cg(const QuadraticModel& q_b, const QuadraticModel& q_bt, int k,
                             const CgConfig& config, DebiasMode mode = DebiasMode::interleaved,
                             bool keep_gradients = false);

struct NewtonStep {
  Vector displacement;
  CgTrace trace;
};

NewtonStep newton_step(const QuadraticModel& q, const CgConfig& config);

}  // namespace mbq

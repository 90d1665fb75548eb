#include "mbq/cg.hpp"

#include <algorithm>
#include <cmath>

#include "mbq/errors.hpp"

namespace mbq {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::max_iter: return "max_iter";
    case Termination::tolerance: return "tolerance";
    case Termination::negative_curvature: return "negative_curvature";
  }
  return "?";
}

void CgConfig::validate() const {
  if (!(epsilon > 0.0)) throw ValidationError("cg: epsilon must be > 0");
  if (max_iterations < 1) throw ValidationError("cg: max_iterations must be >= 1");
}

namespace {

// One CG process. step() spends exactly one matvec.
class CgState {
 public:
  CgState(const QuadraticModel& q, bool keep_gradients) : q_(q), keep_(keep_gradients) {
    r_ = q.gradient;
    s_ = -r_;
    rr_ = r_.squaredNorm();
    trace_.iterates.push_back(q.anchor);
    trace_.residual_norms.push_back(std::sqrt(rr_));
    if (keep_) trace_.gradients.push_back(r_);
  }

  // Returns false (with termination set) when no further step is taken.
  bool ready(const CgConfig& config, int limit) {
    if (trace_.residual_norms.back() <= config.epsilon) {
      trace_.termination = Termination::tolerance;
      return false;
    }
    if (trace_.steps() >= limit) {
      trace_.termination = Termination::max_iter;
      return false;
    }
    return true;
  }

  // Computes d_p and H d_p; false on nonpositive curvature.
  bool prepare() {
    d_ = s_ / s_.norm();
    h_ = q_.curvature.apply(d_);
    curv_ = d_.dot(h_);
    if (!(curv_ > 0.0)) {
      trace_.termination = Termination::negative_curvature;
      return false;
    }
    return true;
  }

  void advance() {
    const double tau = -d_.dot(r_) / curv_;
    trace_.directions.push_back(d_);
    trace_.magnitudes.push_back(tau);
    trace_.iterates.push_back(trace_.iterates.back() + tau * d_);
    r_ += tau * h_;
    const double rr_next = r_.squaredNorm();
    const double beta = rr_next / rr_;
    rr_ = rr_next;
    s_ = -r_ + beta * s_;
    trace_.cg_betas.push_back(beta);
    trace_.residual_norms.push_back(std::sqrt(rr_));
    if (keep_) trace_.gradients.push_back(r_);
  }

  const Vector& direction() const { return d_; }
  CgTrace& trace() { return trace_; }

 private:
  const QuadraticModel& q_;
  bool keep_;
  Vector r_, s_, d_, h_;
  double rr_ = 0.0;
  double curv_ = 0.0;
  CgTrace trace_;
};

// Debiased magnitudes along given directions, measured on q.
class DebiasState {
 public:
  DebiasState(const QuadraticModel& q, bool keep_gradients) : q_(q), keep_(keep_gradients) {
    g_ = q.gradient;
    trace_.iterates.push_back(q.anchor);
    trace_.residual_norms.push_back(g_.norm());
    if (keep_) trace_.gradients.push_back(g_);
  }

  bool step(const Vector& d, double cg_beta) {
    const Vector h = q_.curvature.apply(d);
    const double curv = d.dot(h);
    if (!(curv > 0.0) || std::abs(curv) < 1e-14) {
      trace_.termination = Termination::negative_curvature;
      return false;
    }
    const double tau = -d.dot(g_) / curv;
    trace_.directions.push_back(d);
    trace_.magnitudes.push_back(tau);
    trace_.iterates.push_back(trace_.iterates.back() + tau * d);
    g_ += tau * h;
    trace_.cg_betas.push_back(cg_beta);
    trace_.residual_norms.push_back(g_.norm());
    if (keep_) trace_.gradients.push_back(g_);
    return true;
  }

  CgTrace& trace() { return trace_; }

 private:
  const QuadraticModel& q_;
  bool keep_;
  Vector g_;
  CgTrace trace_;
};

}  // namespace

CgTrace cg_minimize(const QuadraticModel& q, const CgConfig& config, bool keep_gradients) {
  config.validate();
  CgState state(q, keep_gradients);
  while (state.ready(config, config.max_iterations) && state.prepare()) state.advance();
  return std::move(state.trace());
}

DebiasedCgResult debiased_cg(const QuadraticModel& q_b, const QuadraticModel& q_bt, int k,
                             const CgConfig& config, DebiasMode mode, bool keep_gradients) {
  config.validate();
  if (k < 1) throw ValidationError("debiased_cg: k must be >= 1");
  if (q_b.dim() != q_bt.dim()) throw ValidationError("debiased_cg: dimension mismatch");
  if (q_b.anchor != q_bt.anchor) throw ValidationError("debiased_cg: quadratics have different anchors");
  const int limit = std::min(k, config.max_iterations);
  const long long start_b = q_b.curvature.matvec_count();
  const long long start_bt = q_bt.curvature.matvec_count();

  DebiasedCgResult out;
  CgState cg(q_b, keep_gradients);
  DebiasState debias(q_bt, keep_gradients);
  if (mode == DebiasMode::interleaved) {
    while (cg.ready(config, limit) && cg.prepare()) {
      cg.advance();
      if (!debias.step(cg.direction(), cg.trace().cg_betas.back())) {
        cg.trace().termination = Termination::negative_curvature;
        break;
      }
    }
    if (debias.trace().termination != Termination::negative_curvature) {
      debias.trace().termination = cg.trace().termination;
    }
    out.matvecs_b = q_b.curvature.matvec_count() - start_b;
    out.matvecs_bt = q_bt.curvature.matvec_count() - start_bt;
  } else {
    while (cg.ready(config, limit) && cg.prepare()) cg.advance();
    out.matvecs_b = q_b.curvature.matvec_count() - start_b;
    const CgTrace& t = cg.trace();
    int done = 0;
    for (int p = 0; p < t.steps(); ++p, ++done) {
      if (!debias.step(t.directions[static_cast<std::size_t>(p)],
                       t.cg_betas[static_cast<std::size_t>(p)])) {
        break;
      }
    }
    if (done < t.steps()) {
      // Truncate the direction trace to the steps that were debiased.
      CgTrace& ct = cg.trace();
      ct.directions.resize(static_cast<std::size_t>(done));
      ct.magnitudes.resize(static_cast<std::size_t>(done));
      ct.cg_betas.resize(static_cast<std::size_t>(done));
      ct.iterates.resize(static_cast<std::size_t>(done) + 1);
      ct.residual_norms.resize(static_cast<std::size_t>(done) + 1);
      if (keep_gradients) ct.gradients.resize(static_cast<std::size_t>(done) + 1);
      ct.termination = Termination::negative_curvature;
    } else {
      debias.trace().termination = t.termination;
    }
    out.matvecs_bt = q_bt.curvature.matvec_count() - start_bt;
  }
  out.direction_trace = std::move(cg.trace());
  out.debiased_trace = std::move(debias.trace());
  return out;
}

NewtonStep newton_step(const QuadraticModel& q, const CgConfig& config) {
  NewtonStep out;
  out.trace = cg_minimize(q, config);
  out.displacement = out.trace.last() - q.anchor;
  return out;
}

}  // namespace mbq

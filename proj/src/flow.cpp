// Copyright 2026 The natgrad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "natgrad/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace natgrad {

namespace {

struct FlowState {
  BatchLinearization lin;
  DenseVector velocity;
  double condition = 0.0;
};

// Rows whose gradient vanishes relative to the largest one (converged
// samples, s_n = 0) contribute nothing to the velocity and are left out of
// the Gram solve. Returns false when the Gram condition exceeds the limit.
bool evaluate(const ModelSpec& spec, const DenseVector& theta, const Batch& data, double max_condition,
              FlowState& out) {
  out.lin = batch_linearize(spec, ParameterVector::from_values(spec, theta), data);
  const auto& jac = out.lin.jacobian;
  std::vector<double> norms(jac.rows());
  double largest = 0.0;
  for (std::size_t n = 0; n < jac.rows(); ++n) largest = std::max(largest, norms[n] = norm2(jac.row(n)));
  out.velocity = DenseVector(jac.cols());
  out.condition = 1.0;
  if (largest == 0.0) return true;
  std::vector<double> values, rhs;
  for (std::size_t n = 0; n < jac.rows(); ++n) {
    if (norms[n] <= 1e-12 * largest) continue;
    values.insert(values.end(), jac.row(n).begin(), jac.row(n).end());
    rhs.push_back(out.lin.sief[n]);
  }
  const DenseMatrix kept = DenseMatrix::from_rows(rhs.size(), jac.cols(), std::move(values));
  DenseMatrix g = gram(kept);
  out.condition = spd_condition(g);
  if (!(out.condition <= max_condition)) return false;
  DenseVector w = solve_spd(g, rhs, 0.0);
  out.velocity = -1.0 * matvec_transposed(kept, w);
  return true;
}

// One RK4 step from `theta` whose velocity is already in `state`.
bool rk4_step(const ModelSpec& spec, DenseVector& theta, const Batch& data, double dt, double max_condition,
              const FlowState& state, double& worst_condition) {
  FlowState s2, s3, s4;
  auto probe = [&](const DenseVector& k, double h, FlowState& s) {
    DenseVector x = theta;
    axpy(h, k, x);
    const bool ok = evaluate(spec, x, data, max_condition, s);
    worst_condition = std::max(worst_condition, s.condition);
    return ok;
  };
  if (!probe(state.velocity, 0.5 * dt, s2)) return false;
  if (!probe(s2.velocity, 0.5 * dt, s3)) return false;
  if (!probe(s3.velocity, dt, s4)) return false;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] += dt / 6.0 *
                (state.velocity[i] + 2.0 * s2.velocity[i] + 2.0 * s3.velocity[i] + s4.velocity[i]);
  }
  return true;
}

std::size_t step_count(const FlowOptions& o) {
  if (!(o.dt > 0.0) || !(o.horizon >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "flow needs dt > 0, T >= 0");
  return static_cast<std::size_t>(std::llround(o.horizon / o.dt));
}

}  // namespace

DenseVector ief_flow_velocity(const ModelSpec& spec, const DenseVector& theta, const Batch& data,
                              double* gram_condition) {
  FlowState s;
  const bool ok = evaluate(spec, theta, data, FlowOptions{}.max_condition, s);
  if (gram_condition) *gram_condition = s.condition;
  if (!ok) throw Error(ErrorCode::kRankDeficiency, "singular Gram matrix");
  return s.velocity;
}

SublinearBoundReport ief_flow_bound_check(const ModelSpec& spec, const ParameterVector& theta0, const Batch& data,
                                          const FlowOptions& options) {
  if (!spec.is_classification()) throw Error(ErrorCode::kInvalidArgument, "bound check needs a softmax model");
  check_shapes(spec, theta0, data);
  const std::size_t steps = step_count(options);
  const std::size_t n = data.size();
  const std::size_t trace_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 / options.dt)));

  SublinearBoundReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  DenseVector theta = theta0.values();
  FlowState state;
  if (!evaluate(spec, theta, data, options.max_condition, state)) {
    rep.error = ErrorCode::kRankDeficiency;
    rep.max_condition = state.condition;
    return rep;
  }
  rep.max_condition = state.condition;

  // For cross-entropy the target probability is exp(−l_n).
  rep.c0.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(-state.lin.losses[i]);
    rep.c0[i] = p >= 1.0 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - p) + std::log(p / (1.0 - p));
  }

  DenseVector prev_loss, cur_sief = state.lin.sief, cur_loss = state.lin.losses;
  auto record = [&](std::size_t k) {
    const double t = static_cast<double>(k) * options.dt;
    if (k % trace_every == 0) {
      rep.times.push_back(t);
      std::vector<double> probs(n);
      for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(-cur_loss[i]);
      rep.target_probs.push_back(std::move(probs));
    }
    if (k == 0) return;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(t > -1.0 - rep.c0[i]) || std::isinf(rep.c0[i])) continue;
      const double margin = std::exp(-cur_loss[i]) - (1.0 - 2.0 / (t + rep.c0[i] + 1.0));
      if (margin < rep.min_margin) {
        rep.min_margin = margin;
        rep.min_margin_time = t;
        rep.min_margin_sample = i;
      }
    }
  };
  record(0);

  for (std::size_t k = 0; k < steps; ++k) {
    if (!rk4_step(spec, theta, data, options.dt, options.max_condition, state, rep.max_condition)) {
      rep.error = ErrorCode::kRankDeficiency;
      return rep;
    }
    FlowState next;
    const bool ok = evaluate(spec, theta, data, options.max_condition, next);
    rep.max_condition = std::max(rep.max_condition, next.condition);
    if (!ok) {
      rep.error = ErrorCode::kRankDeficiency;
      return rep;
    }
    if (k > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double dl = (next.lin.losses[i] - prev_loss[i]) / (2.0 * options.dt);
        rep.max_rate_residual = std::max(rep.max_rate_residual, std::abs(dl + cur_sief[i]));
      }
    }
    prev_loss = cur_loss;
    cur_loss = next.lin.losses;
    cur_sief = next.lin.sief;
    state = std::move(next);
    rep.steps = k + 1;
    record(k + 1);
  }
  return rep;
}

LinearBoundReport strong_convex_bound_check(const ModelSpec& spec, const ParameterVector& theta0,
                                            const Batch& data, const FlowOptions& options) {
  if (spec.kind != ModelKind::kLinearLeastSquares) {
    throw Error(ErrorCode::kInvalidArgument, "bound check needs a least-squares model");
  }
  check_shapes(spec, theta0, data);
  const std::size_t steps = step_count(options);
  const std::size_t n = data.size();

  LinearBoundReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  rep.min_margin_per_sample.assign(n, std::numeric_limits<double>::infinity());
  DenseVector theta = theta0.values();
  FlowState state;
  const bool ok0 = evaluate(spec, theta, data, options.max_condition, state);
  rep.max_condition = state.condition;
  if (!ok0) {
    rep.error = ErrorCode::kRankDeficiency;
    return rep;
  }
  const DenseVector l0 = state.lin.losses;

  auto record = [&](std::size_t k, const DenseVector& losses) {
    const double decay = std::exp(-2.0 * static_cast<double>(k) * options.dt);
    for (std::size_t i = 0; i < n; ++i) {
      const double margin = decay * l0[i] - losses[i];
      rep.min_margin_per_sample[i] = std::min(rep.min_margin_per_sample[i], margin);
      rep.min_margin = std::min(rep.min_margin, margin);
      rep.max_abs_deviation = std::max(rep.max_abs_deviation, std::abs(margin));
    }
  };
  record(0, l0);

  for (std::size_t k = 0; k < steps; ++k) {
    if (!rk4_step(spec, theta, data, options.dt, options.max_condition, state, rep.max_condition)) {
      rep.error = ErrorCode::kRankDeficiency;
      return rep;
    }
    FlowState next;
    const bool ok = evaluate(spec, theta, data, options.max_condition, next);
    rep.max_condition = std::max(rep.max_condition, next.condition);
    if (!ok) {
      rep.error = ErrorCode::kRankDeficiency;
      return rep;
    }
    state = std::move(next);
    rep.steps = k + 1;
    record(k + 1, state.lin.losses);
  }
  return rep;
}

}  // namespace natgrad

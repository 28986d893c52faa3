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

#pragma once

// Continuous-time checks of the full-batch, undamped iEF flow
//
//   dθ/dt = −Jᵀ (J Jᵀ)⁻¹ s
//
// integrated with classical RK4. Along this flow every sample obeys
// dl_n/dt = −s_n, which gives a sub-linear bound on the target probability
// for softmax + cross-entropy and an e^{−2t} decay for the ½(z−y)² objective.

#include <cstddef>
#include <optional>
#include <vector>

#include "natgrad/error.hpp"
#include "natgrad/models.hpp"

namespace natgrad {

struct FlowOptions {
  double horizon = 20.0;
  double dt = 1e-3;
  double max_condition = 1e12;  // Gram condition above this aborts the run
};

struct SublinearBoundReport {
  std::vector<double> c0;             // per-sample constant of the bound
  double min_margin = 0.0;            // min over t, n of p̂_n(t) − (1 − 2/(t + C₀ + 1))
  double min_margin_time = 0.0;
  std::size_t min_margin_sample = 0;
  double max_rate_residual = 0.0;    // max over t, n of |dl_n/dt + s_n|
  double max_condition = 0.0;
  std::size_t steps = 0;
  std::vector<double> times;          // coarse trace, every 1/dt/10 steps
  std::vector<std::vector<double>> target_probs;
  std::optional<ErrorCode> error;     // RankDeficiency aborts with the partial trace

  bool completed() const { return !error.has_value(); }
};

struct LinearBoundReport {
  double min_margin = 0.0;            // min over t, n of e^{−2t}(l_n(0) − l*) − (l_n(t) − l*)
  double max_abs_deviation = 0.0;     // max over t, n of |l_n(t) − e^{−2t} l_n(0)|
  std::vector<double> min_margin_per_sample;
  double max_condition = 0.0;
  std::size_t steps = 0;
  std::optional<ErrorCode> error;

  bool completed() const { return !error.has_value(); }
};

/// Velocity of the undamped iEF flow at θ; also reports the Gram condition.
/// Throws RankDeficiency when the condition exceeds the FlowOptions default.
DenseVector ief_flow_velocity(const ModelSpec& spec, const DenseVector& theta, const Batch& data,
                              double* gram_condition = nullptr);

/// Bound p̂_n(t) > 1 − 2/(t + C₀ + 1), with
/// C₀ = 1/(1 − p̂_n(0)) + log(p̂_n(0)/(1 − p̂_n(0))), checked where
/// t > max(−1 − C₀, 0). Softmax models only.
SublinearBoundReport ief_flow_bound_check(const ModelSpec& spec, const ParameterVector& theta0, const Batch& data,
                                          const FlowOptions& options = {});

/// l_n(t) − l* ≤ e^{−2t}(l_n(0) − l*) with l* = 0 (interpolating
/// least-squares model, m = 1).
LinearBoundReport strong_convex_bound_check(const ModelSpec& spec, const ParameterVector& theta0,
                                            const Batch& data, const FlowOptions& options = {});

}  // namespace natgrad

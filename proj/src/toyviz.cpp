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

#include "natgrad/toyviz.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "natgrad/curvature.hpp"
#include "natgrad/error.hpp"
#include "natgrad/updates.hpp"

namespace natgrad {

namespace {

constexpr double kEfFallbackScale = 1e-4;
constexpr double kReversalCosine = -0.99;

ParameterVector as_params(ToyProblem toy, std::array<double, 2> theta) {
  return ParameterVector::from_values(toy_model(toy), DenseVector{theta[0], theta[1]});
}

std::array<double, 2> pair(const DenseVector& v) { return {v[0], v[1]}; }

bool finite_pair(const std::array<double, 2>& v) { return std::isfinite(v[0]) && std::isfinite(v[1]); }

// Jᵀ(JJᵀ)⁻¹ r over rows with nonzero gradient.
FieldSample sample_space_solve(const BatchLinearization& lin, bool use_sief) {
  FieldSample out;
  std::vector<double> values, rhs;
  for (std::size_t n = 0; n < lin.batch_size(); ++n) {
    if (norm2(lin.jacobian.row(n)) < kZeroGradientNorm) {
      out.degenerate = true;
      continue;
    }
    values.insert(values.end(), lin.jacobian.row(n).begin(), lin.jacobian.row(n).end());
    rhs.push_back(use_sief ? lin.sief[n] : 1.0);
  }
  if (rhs.empty()) return out;
  DenseMatrix kept = DenseMatrix::from_rows(rhs.size(), lin.num_parameters(), std::move(values));
  try {
    out.direction = pair(matvec_transposed(kept, solve_spd(gram(kept), rhs, 0.0)));
  } catch (const Error&) {
    out.degenerate = true;
    out.direction = {0.0, 0.0};
  }
  return out;
}

}  // namespace

std::string_view to_string(ToyProblem toy) { return toy == ToyProblem::kLeastSquares ? "lls" : "logistic"; }

ToyProblem parse_toy(std::string_view text) {
  if (text == "lls") return ToyProblem::kLeastSquares;
  if (text == "logistic") return ToyProblem::kLogistic;
  throw Error(ErrorCode::kInvalidArgument, "unknown toy '" + std::string(text) + "'");
}

std::string_view to_string(FieldMethod m) {
  switch (m) {
    case FieldMethod::kSgd: return "sgd";
    case FieldMethod::kNgd: return "ngd";
    case FieldMethod::kIef: return "ief";
    case FieldMethod::kEf: return "ef";
  }
  return "?";
}

FieldMethod parse_field_method(std::string_view text) {
  for (auto m : kFieldMethods) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown field method '" + std::string(text) + "'");
}

ModelSpec toy_model(ToyProblem toy) {
  return toy == ToyProblem::kLeastSquares ? ModelSpec::least_squares(1) : ModelSpec::logistic(1);
}

Batch toy_data(ToyProblem toy) {
  Batch b;
  if (toy == ToyProblem::kLeastSquares) {
    b.inputs = DenseMatrix{{0.0}, {1.0}};
    b.targets = {0.0, 0.0};
  } else {
    b.inputs = DenseMatrix{{0.0}, {2.0}};
    b.labels = {0, 1};
  }
  return b;
}

void GridSpec::validate() const {
  if (n0 < 2 || n1 < 2 || !(hi0 > lo0) || !(hi1 > lo1)) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs >= 2 points per axis and hi > lo");
  }
}

double GridSpec::theta0(std::size_t i) const { return lo0 + (hi0 - lo0) * static_cast<double>(i) / (n0 - 1); }
double GridSpec::theta1(std::size_t j) const { return lo1 + (hi1 - lo1) * static_cast<double>(j) / (n1 - 1); }

double toy_loss(ToyProblem toy, std::array<double, 2> theta) {
  ForwardResult fr = forward(toy_model(toy), as_params(toy, theta), toy_data(toy));
  return fr.losses[0] + fr.losses[1];
}

FieldSample field_direction(ToyProblem toy, FieldMethod method, std::array<double, 2> theta) {
  const ModelSpec spec = toy_model(toy);
  const Batch data = toy_data(toy);
  const ParameterVector p = as_params(toy, theta);
  const BatchLinearization lin = batch_linearize(spec, p, data);

  FieldSample out;
  switch (method) {
    case FieldMethod::kSgd:
      out.direction = pair(lin.total_grad);
      break;
    case FieldMethod::kNgd:
      try {
        out.direction = pair(solve_spd(build_fisher(spec, p, data).matrix, lin.total_grad, 0.0));
      } catch (const Error&) {
        out.degenerate = true;
      }
      break;
    case FieldMethod::kIef:
      out = sample_space_solve(lin, true);
      break;
    case FieldMethod::kEf: {
      bool zero_row = false;
      for (std::size_t n = 0; n < lin.batch_size(); ++n) zero_row |= norm2(lin.jacobian.row(n)) < kZeroGradientNorm;
      if (!zero_row) {
        out = sample_space_solve(lin, false);
        break;
      }
      const DenseMatrix ef = build_ef(lin).matrix;
      const double lambda = kEfFallbackScale * std::max(ef(0, 0), ef(1, 1));
      out.degenerate = true;
      if (lambda > 0.0) out.direction = pair(solve_spd(ef, lin.total_grad, lambda));
      break;
    }
  }
  if (!finite_pair(out.direction)) {
    out.direction = {0.0, 0.0};
    out.degenerate = true;
  }
  return out;
}

VectorFieldGrid compute_field(ToyProblem toy, const GridSpec& grid) {
  grid.validate();
  VectorFieldGrid field{toy, grid, {}};
  const std::size_t per_method = grid.n0 * grid.n1;
  field.cells.resize(kFieldMethods.size() * per_method);
  const auto total = static_cast<std::ptrdiff_t>(field.cells.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const std::size_t m = idx / per_method, i = (idx % per_method) / grid.n1, j = idx % grid.n1;
    VectorFieldCell& cell = field.cells[idx];
    cell.method = kFieldMethods[m];
    cell.theta = {grid.theta0(i), grid.theta1(j)};
    cell.loss = toy_loss(toy, cell.theta);
    cell.sample = field_direction(toy, cell.method, cell.theta);
  }
  return field;
}

std::vector<LocusLine> optimal_loci(ToyProblem toy) {
  if (toy == ToyProblem::kLeastSquares) {
    return {{1.0, 0.0, 0.0, "sample0-optimum"}, {1.0, 1.0, 0.0, "sample1-optimum"}};
  }
  return {{1.0, 1.0, 0.0, "boundary-x1"}};
}

Trajectory trace_trajectory(ToyProblem toy, FieldMethod method, std::array<double, 2> start,
                            const TrajectoryOptions& options, std::size_t id) {
  if (!(options.step_norm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step norm must be > 0");
  Trajectory t{method, id, options.step_norm, {start}, "max-steps"};
  std::array<double, 2> theta = start;
  std::array<double, 2> d = field_direction(toy, method, theta).direction;
  for (std::size_t k = 0; k < options.max_steps; ++k) {
    if (toy_loss(toy, theta) < options.loss_tolerance) {
      t.stop_reason = "converged";
      return t;
    }
    const double nd = std::hypot(d[0], d[1]);
    if (!(nd > 0.0)) {
      t.stop_reason = "zero-direction";
      return t;
    }
    const double scale = options.step_norm / nd;
    const std::array<double, 2> next = {theta[0] - scale * d[0], theta[1] - scale * d[1]};
    const std::array<double, 2> d_next = field_direction(toy, method, next).direction;
    const double nn = std::hypot(d_next[0], d_next[1]);
    if (nn > 0.0 && (d[0] * d_next[0] + d[1] * d_next[1]) / (nd * nn) < kReversalCosine &&
        toy_loss(toy, next) >= toy_loss(toy, theta)) {
      t.stop_reason = "overshoot";
      return t;
    }
    theta = next;
    d = d_next;
    t.points.push_back(theta);
  }
  return t;
}

std::vector<Trajectory> trace_trajectories(ToyProblem toy, FieldMethod method,
                                           const std::vector<std::array<double, 2>>& starts,
                                           const TrajectoryOptions& options) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < starts.size(); ++i) out.push_back(trace_trajectory(toy, method, starts[i], options, i));
  return out;
}

std::vector<std::array<double, 2>> default_starts(ToyProblem toy) {
  if (toy == ToyProblem::kLeastSquares) return {{1.0, 1.0}, {-1.5, 1.0}, {1.5, -1.0}, {-1.0, -1.5}, {0.5, 1.8}};
  return {{0.0, 0.0}, {1.0, -1.5}, {-1.5, -0.5}, {1.5, 1.0}, {-0.5, 1.5}};
}

double mean_turn_angle(const Trajectory& t) {
  if (t.points.size() < 3) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 2; k < t.points.size(); ++k) {
    const double ax = t.points[k - 1][0] - t.points[k - 2][0], ay = t.points[k - 1][1] - t.points[k - 2][1];
    const double bx = t.points[k][0] - t.points[k - 1][0], by = t.points[k][1] - t.points[k - 1][1];
    total += std::abs(std::atan2(ax * by - ay * bx, ax * bx + ay * by));
    ++count;
  }
  return total / static_cast<double>(count);
}

void write_field_csv(std::ostream& os, const VectorFieldGrid& field) {
  os << "theta0,theta1,loss,method,d0,d1,degenerate_flag\n";
  char buf[160];
  for (const auto& c : field.cells) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", c.theta[0], c.theta[1], c.loss);
    os << buf << to_string(c.method);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d\n", c.sample.direction[0], c.sample.direction[1],
                  c.sample.degenerate ? 1 : 0);
    os << buf;
  }
}

void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
  os << "method,traj_id,step,theta0,theta1\n";
  char buf[128];
  for (const auto& t : trajectories) {
    for (std::size_t k = 0; k < t.points.size(); ++k) {
      std::snprintf(buf, sizeof buf, ",%zu,%zu,%.17g,%.17g\n", t.id, k, t.points[k][0], t.points[k][1]);
      os << to_string(t.method) << buf;
    }
  }
}

void write_loci_csv(std::ostream& os, const std::vector<LocusLine>& lines) {
  os << "a0,a1,c,label\n";
  char buf[96];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", l.a0, l.a1, l.c);
    os << buf << l.label << '\n';
  }
}

}  // namespace natgrad

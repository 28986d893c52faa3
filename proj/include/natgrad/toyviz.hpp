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

// Update vector fields and normalised-step trajectories on the two
// two-parameter toy problems: least squares on x = {0, 1}, y = {0, 0} and
// logistic regression on x = {0, 2} with labels {0, 1}. Parameters are
// θ = (θ₀, θ₁) = (bias, slope).

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/models.hpp"

namespace natgrad {

enum class ToyProblem { kLeastSquares, kLogistic };
std::string_view to_string(ToyProblem toy);
ToyProblem parse_toy(std::string_view text);

enum class FieldMethod { kSgd, kNgd, kIef, kEf };
std::string_view to_string(FieldMethod m);
FieldMethod parse_field_method(std::string_view text);
inline constexpr std::array<FieldMethod, 4> kFieldMethods = {FieldMethod::kSgd, FieldMethod::kNgd, FieldMethod::kIef,
                                                             FieldMethod::kEf};

ModelSpec toy_model(ToyProblem toy);
Batch toy_data(ToyProblem toy);

struct GridSpec {
  double lo0 = -2.0, hi0 = 2.0;
  double lo1 = -2.0, hi1 = 2.0;
  std::size_t n0 = 41, n1 = 41;

  void validate() const;
  double theta0(std::size_t i) const;
  double theta1(std::size_t j) const;
};

/// Raw update direction d at θ; gradient descent moves along −d.
struct FieldSample {
  std::array<double, 2> direction{};
  bool degenerate = false;  // zero per-sample gradient or singular solve
};

/// λ = 0 throughout except EF at cells with a zero-norm per-sample gradient,
/// which falls back to (F̃ + 1e-4·max diag(F̃)·I)⁻¹ ∇L.
FieldSample field_direction(ToyProblem toy, FieldMethod method, std::array<double, 2> theta);
double toy_loss(ToyProblem toy, std::array<double, 2> theta);

struct VectorFieldCell {
  std::array<double, 2> theta{};
  double loss = 0.0;
  FieldMethod method = FieldMethod::kSgd;
  FieldSample sample;
};

struct VectorFieldGrid {
  ToyProblem toy = ToyProblem::kLeastSquares;
  GridSpec grid;
  std::vector<VectorFieldCell> cells;  // method-major, then θ₀, then θ₁
};

VectorFieldGrid compute_field(ToyProblem toy, const GridSpec& grid);

/// a₀θ₀ + a₁θ₁ = c, the dashed optimal-parameter loci.
struct LocusLine {
  double a0 = 0.0, a1 = 0.0, c = 0.0;
  std::string label;
};
std::vector<LocusLine> optimal_loci(ToyProblem toy);

struct TrajectoryOptions {
  double step_norm = 1e-2;
  std::size_t max_steps = 1000;
  double loss_tolerance = 1e-10;
};

struct Trajectory {
  FieldMethod method = FieldMethod::kSgd;
  std::size_t id = 0;
  double step_norm = 0.0;
  std::vector<std::array<double, 2>> points;  // start first
  std::string stop_reason;
};

/// Euler steps θ ← θ − ε·d/‖d‖. Stops at loss < tolerance, after max_steps,
/// on a zero direction, or when the proposed step overshoots a stationary
/// point: the field there reverses (cosine below −0.99) and the loss does not
/// decrease.
Trajectory trace_trajectory(ToyProblem toy, FieldMethod method, std::array<double, 2> start,
                            const TrajectoryOptions& options, std::size_t id = 0);
std::vector<Trajectory> trace_trajectories(ToyProblem toy, FieldMethod method,
                                           const std::vector<std::array<double, 2>>& starts,
                                           const TrajectoryOptions& options);

std::vector<std::array<double, 2>> default_starts(ToyProblem toy);

/// Mean absolute heading change between consecutive steps, in radians.
double mean_turn_angle(const Trajectory& t);

// theta0,theta1,loss,method,d0,d1,degenerate_flag
void write_field_csv(std::ostream& os, const VectorFieldGrid& field);
// method,traj_id,step,theta0,theta1
void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& trajectories);
// a0,a1,c,label
void write_loci_csv(std::ostream& os, const std::vector<LocusLine>& lines);

}  // namespace natgrad

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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "natgrad/cli.hpp"
#include "natgrad/toyviz.hpp"
#include "test_support.hpp"

namespace natgrad {
namespace {

using Vec2 = std::array<double, 2>;
constexpr auto kLls = ToyProblem::kLeastSquares;
constexpr auto kLog = ToyProblem::kLogistic;

void expect_dir(ToyProblem toy, FieldMethod m, Vec2 theta, Vec2 want, double tol = 1e-12) {
  const FieldSample s = field_direction(toy, m, theta);
  EXPECT_FALSE(s.degenerate) << to_string(m);
  EXPECT_NEAR(s.direction[0], want[0], tol) << to_string(m);
  EXPECT_NEAR(s.direction[1], want[1], tol) << to_string(m);
}

double norm(Vec2 v) { return std::hypot(v[0], v[1]); }
double cosine(Vec2 a, Vec2 b) { return (a[0] * b[0] + a[1] * b[1]) / (norm(a) * norm(b)); }

TEST(Field, LeastSquaresCellValues) {
  expect_dir(kLls, FieldMethod::kSgd, {1, 1}, {3, 2});
  expect_dir(kLls, FieldMethod::kNgd, {1, 1}, {1, 1});
  expect_dir(kLls, FieldMethod::kIef, {1, 1}, {1, 1});
  expect_dir(kLls, FieldMethod::kEf, {1, 1}, {1, -0.5});
  EXPECT_DOUBLE_EQ(toy_loss(kLls, {1, 1}), 2.5);
}

TEST(Field, LogisticCellValues) {
  expect_dir(kLog, FieldMethod::kSgd, {0, 0}, {0, -1});
  expect_dir(kLog, FieldMethod::kNgd, {0, 0}, {2, -2});
  expect_dir(kLog, FieldMethod::kIef, {0, 0}, {0.5, -0.5});
  expect_dir(kLog, FieldMethod::kEf, {0, 0}, {2, -2});
  EXPECT_NEAR(cosine(field_direction(kLog, FieldMethod::kNgd, {0, 0}).direction,
                     field_direction(kLog, FieldMethod::kIef, {0, 0}).direction),
              1.0, 1e-15);
}

TEST(Field, SampleOptimumLineIsFlagged) {
  // θ₀ = 0 zeroes the first sample's gradient; EF falls back to the damped solve.
  const FieldSample ef = field_direction(kLls, FieldMethod::kEf, {0.0, 1.0});
  EXPECT_TRUE(ef.degenerate);
  EXPECT_TRUE(std::isfinite(ef.direction[0]) && std::isfinite(ef.direction[1]));
  EXPECT_GT(norm(ef.direction), 0.0);
  EXPECT_TRUE(field_direction(kLls, FieldMethod::kIef, {0.0, 1.0}).degenerate);
}

TEST(Field, NgdUnitStepLandsOnOptimumEverywhere) {
  const VectorFieldGrid f = compute_field(kLls, GridSpec{});
  std::size_t checked = 0;
  for (const auto& c : f.cells) {
    if (c.method != FieldMethod::kNgd || c.sample.degenerate) continue;
    ++checked;
    EXPECT_NEAR(c.theta[0] - c.sample.direction[0], 0.0, 1e-12);
    EXPECT_NEAR(c.theta[1] - c.sample.direction[1], 0.0, 1e-12);
  }
  EXPECT_GT(checked, 1600u);
}

TEST(Field, LeastSquaresIefEqualsNgd) {
  const VectorFieldGrid f = compute_field(kLls, GridSpec{});
  const std::size_t per = f.grid.n0 * f.grid.n1;
  ASSERT_EQ(f.cells.size(), 4 * per);
  std::size_t compared = 0;
  for (std::size_t i = 0; i < per; ++i) {
    const auto& ngd = f.cells[1 * per + i];
    const auto& ief = f.cells[2 * per + i];
    ASSERT_EQ(ngd.method, FieldMethod::kNgd);
    ASSERT_EQ(ief.method, FieldMethod::kIef);
    if (ngd.sample.degenerate || ief.sample.degenerate) continue;
    ++compared;
    EXPECT_NEAR(ngd.sample.direction[0], ief.sample.direction[0], 1e-10);
    EXPECT_NEAR(ngd.sample.direction[1], ief.sample.direction[1], 1e-10);
  }
  EXPECT_GT(compared, 1500u);
}

TEST(Field, EfBlowsUpNearConvergence) {
  // Both samples well classified: gradients are tiny, EF scales like 1/‖∇l‖.
  const Vec2 theta{-4.0, 4.0};
  const double ef = norm(field_direction(kLog, FieldMethod::kEf, theta).direction);
  const double ief = norm(field_direction(kLog, FieldMethod::kIef, theta).direction);
  EXPECT_GT(ef, 10.0 * ief);
}

TEST(Field, EqualLossCellsGiveParallelEfAndIef) {
  // s₀ = σ(θ₀)² and s₁ = σ(−θ₀ − 2θ₁)² agree on the line θ₀ + θ₁ = 0.
  for (double a : {-1.5, -0.3, 0.0, 0.7, 2.0})
    EXPECT_NEAR(cosine(field_direction(kLog, FieldMethod::kEf, {a, -a}).direction,
                       field_direction(kLog, FieldMethod::kIef, {a, -a}).direction),
                1.0, 1e-12)
        << a;
}

TEST(Field, GridLayoutAndDeterminism) {
  GridSpec g;
  g.n0 = 5;
  g.n1 = 3;
  const VectorFieldGrid a = compute_field(kLog, g), b = compute_field(kLog, g);
  ASSERT_EQ(a.cells.size(), 60u);
  EXPECT_EQ(a.cells[0].theta, (Vec2{-2, -2}));
  EXPECT_EQ(a.cells[1].theta, (Vec2{-2, 0}));
  EXPECT_EQ(a.cells[3].theta, (Vec2{-1, -2}));
  for (std::size_t i = 0; i < a.cells.size(); ++i) EXPECT_EQ(a.cells[i].sample.direction, b.cells[i].sample.direction);
  GridSpec bad;
  bad.n0 = 0;
  EXPECT_ANY_THROW(bad.validate());
}

TEST(Trajectory, NgdStraightLineToOptimum) {
  const Trajectory t = trace_trajectory(kLls, FieldMethod::kNgd, {1, 1}, TrajectoryOptions{});
  EXPECT_EQ(t.points.size() - 1, 141u);
  for (const auto& p : t.points) EXPECT_NEAR(p[0], p[1], 1e-12);
  EXPECT_LT(norm(t.points.back()), 1e-2);
}

TEST(Trajectory, StepNormsAreExact) {
  for (ToyProblem toy : {kLls, kLog})
    for (FieldMethod m : kFieldMethods)
      for (const Trajectory& t : trace_trajectories(toy, m, default_starts(toy), TrajectoryOptions{}))
        for (std::size_t k = 1; k < t.points.size(); ++k) {
          const Vec2 d{t.points[k][0] - t.points[k - 1][0], t.points[k][1] - t.points[k - 1][1]};
          EXPECT_NEAR(norm(d), 1e-2, 1e-12) << to_string(toy) << " " << to_string(m);
        }
}

TEST(Trajectory, StartAtOptimumDoesNotMove) {
  const Trajectory t = trace_trajectory(kLls, FieldMethod::kIef, {0, 0}, TrajectoryOptions{});
  EXPECT_EQ(t.points.size(), 1u);
  EXPECT_EQ(t.stop_reason, "converged");
}

TEST(Trajectory, EfTurnsMoreThanIef) {
  double ef = 0.0, ief = 0.0;
  for (const Trajectory& t : trace_trajectories(kLls, FieldMethod::kEf, default_starts(kLls), TrajectoryOptions{}))
    ef += mean_turn_angle(t);
  for (const Trajectory& t : trace_trajectories(kLls, FieldMethod::kIef, default_starts(kLls), TrajectoryOptions{}))
    ief += mean_turn_angle(t);
  EXPECT_GT(ef, ief);
  EXPECT_LT(ief / 5.0, 1e-6);
}

TEST(Loci, OptimalLines) {
  const auto lls = optimal_loci(kLls);
  ASSERT_EQ(lls.size(), 2u);
  const auto log = optimal_loci(kLog);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].a0, 1.0);
  EXPECT_EQ(log[0].a1, 1.0);
  EXPECT_EQ(log[0].c, 0.0);
}

TEST(Csv, HeadersAndGoldenHash) {
  std::ostringstream field, traj, loci;
  write_field_csv(field, compute_field(kLls, GridSpec{}));
  write_trajectory_csv(traj, trace_trajectories(kLls, FieldMethod::kNgd, default_starts(kLls), TrajectoryOptions{}));
  write_loci_csv(loci, optimal_loci(kLls));
  auto first_line = [](const std::string& s) { return s.substr(0, s.find('\n')); };
  EXPECT_EQ(first_line(field.str()), "theta0,theta1,loss,method,d0,d1,degenerate_flag");
  EXPECT_EQ(first_line(traj.str()), "method,traj_id,step,theta0,theta1");
  EXPECT_EQ(first_line(loci.str()), "a0,a1,c,label");
  EXPECT_EQ(content_hash(field.str()), "1b6764b5178cd249");
}

}  // namespace
}  // namespace natgrad

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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "natgrad/data.hpp"
#include "natgrad/optim.hpp"
#include "test_support.hpp"

namespace natgrad {
namespace {

using testing::code_of;

Batch small_mixture(std::uint64_t seed = 1) {
  MixtureSpec m;
  m.n = 96;
  m.dim = 4;
  m.classes = 3;
  m.seed = seed;
  return make_gaussian_mixture(m);
}

TrainConfig config_for(OptimizerKind kind, double eta, std::size_t epochs = 3) {
  TrainConfig c;
  c.optimizer = kind;
  c.schedule = default_schedule(kind, eta);
  c.epochs = epochs;
  c.batch_size = 16;
  c.seed = 11;
  return c;
}

TEST(Train, LeastSquaresIefSingleStepSolvesToy) {
  const ModelSpec spec = testing::lls_spec();
  TrainConfig c = config_for(OptimizerKind::kIef, 1.0, 1);
  c.batch_size = 2;
  c.damping = Damping::trace_relative(1e-20);
  const TrainRun run = train(spec, testing::lls_data(), c, testing::params(spec, {1, 1}));
  ASSERT_EQ(run.steps.size(), 1u);
  EXPECT_DOUBLE_EQ(run.steps[0].loss, 1.25);  // batch mean of (0.5, 2.0)
  EXPECT_NEAR(run.final_theta()[0], 0.0, 1e-12);
  EXPECT_NEAR(run.final_theta()[1], 0.0, 1e-12);
  EXPECT_LT(run.checkpoints.back().train_loss, 1e-20);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const Batch data = small_mixture();
  TrainConfig c = config_for(OptimizerKind::kSgd, 1.0);
  c.schedule.eta0 = 0.0;
  const TrainRun run = train(spec, data, c);
  for (const auto& ck : run.checkpoints) EXPECT_EQ(ck.theta.values(), run.initial.values());
  for (std::size_t e = 1; e < run.checkpoints.size(); ++e)
    EXPECT_EQ(run.checkpoints[e].train_loss, run.checkpoints[0].train_loss);
  TrainConfig negative = c;
  negative.schedule.eta0 = -0.1;
  EXPECT_EQ(code_of([&] { train(spec, data, negative); }), ErrorCode::kInvalidArgument);
}

TEST(Train, BitIdenticalAcrossRepeats) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const Batch data = small_mixture();
  for (OptimizerKind kind :
       {OptimizerKind::kSgd, OptimizerKind::kEf, OptimizerKind::kIef, OptimizerKind::kSf, OptimizerKind::kAdam}) {
    const double eta = kind == OptimizerKind::kAdam ? 1e-3 : 0.05;
    const TrainRun a = train(spec, data, config_for(kind, eta));
    const TrainRun b = train(spec, data, config_for(kind, eta));
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      EXPECT_EQ(a.steps[i].loss, b.steps[i].loss) << to_string(kind);
      EXPECT_EQ(a.steps[i].update_norm, b.steps[i].update_norm);
    }
    EXPECT_EQ(a.final_theta().values(), b.final_theta().values());
  }
}

TEST(Train, StepsAndCheckpointsAreOrdered) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  TrainConfig c = config_for(OptimizerKind::kSgd, 0.05, 4);
  c.batch_size = 40;  // 96 = 40 + 40 + 16: the short batch is kept
  const TrainRun run = train(spec, small_mixture(), c);
  ASSERT_EQ(run.steps.size(), 12u);
  ASSERT_EQ(run.checkpoints.size(), 4u);
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    EXPECT_EQ(run.steps[i].step, i);
    EXPECT_EQ(run.steps[i].epoch, i / 3 + 1);
  }
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(run.checkpoints[e].epoch, e + 1);
}

TEST(Train, NormalizedLinearDecayUpdateNorms) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const TrainRun run = train(spec, small_mixture(), config_for(OptimizerKind::kEf, 0.1, 2));
  const std::size_t total = run.steps.size();
  ASSERT_EQ(total, 12u);
  EXPECT_NEAR(run.steps[0].update_norm, 0.1, 1e-15);
  for (std::size_t t = 0; t < total; ++t)
    EXPECT_NEAR(run.steps[t].update_norm, 0.1 * (1.0 - static_cast<double>(t) / total), 1e-15) << t;
}

TEST(Schedule, Rates) {
  ScheduleSpec m{ScheduleKind::kMultistep, 1.0, 10, 0.5};
  EXPECT_EQ(m.rate(0, 100), 1.0);
  EXPECT_EQ(m.rate(9, 100), 1.0);
  EXPECT_EQ(m.rate(10, 100), 0.5);
  EXPECT_EQ(m.rate(25, 100), 0.25);
  ScheduleSpec d{ScheduleKind::kNormalizedLinearDecay, 2.0};
  EXPECT_EQ(d.rate(0, 4), 2.0);
  EXPECT_EQ(d.rate(3, 4), 0.5);
  EXPECT_EQ(default_schedule(OptimizerKind::kIef, 1.0).kind, ScheduleKind::kConstant);
  EXPECT_EQ(default_schedule(OptimizerKind::kSf, 1.0).kind, ScheduleKind::kNormalizedLinearDecay);
  EXPECT_EQ(parse_schedule("multistep"), ScheduleKind::kMultistep);
  EXPECT_EQ(code_of([] { parse_optimizer("lbfgs"); }), ErrorCode::kInvalidArgument);
}

TEST(Train, MultistepScheduleShrinksSteps) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  TrainConfig c = config_for(OptimizerKind::kSgd, 0.08, 2);
  c.schedule = {ScheduleKind::kMultistep, 0.08, 6, 0.5};
  const TrainRun run = train(spec, small_mixture(), c);
  for (const auto& r : run.steps) EXPECT_EQ(r.eta, r.step < 6 ? 0.08 : 0.04);
}

TEST(Train, DivergenceHaltsWithPartialRecord) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const TrainRun run = train(spec, small_mixture(), config_for(OptimizerKind::kSgd, 1e6, 5));
  EXPECT_TRUE(run.diverged);
  ASSERT_FALSE(run.steps.empty());
  EXPECT_EQ(run.steps.back().status, "DivergenceDetected");
  EXPECT_LT(run.steps.size(), 30u);
  for (std::size_t i = 0; i + 1 < run.steps.size(); ++i) EXPECT_EQ(run.steps[i].status, "ok");
}

TEST(Train, ReductionLawsHoldInVivo) {
  const ModelSpec spec = ModelSpec::mlp(4, {8}, 3);  // P = 67 > N = 8
  for (OptimizerKind kind : {OptimizerKind::kEf, OptimizerKind::kIef}) {
    TrainConfig c = config_for(kind, 0.05, 2);
    c.batch_size = 8;
    c.check_reduction_laws = true;
    const TrainRun run = train(spec, small_mixture(), c);
    for (const auto& r : run.steps) EXPECT_LE(r.law_residual, 1e-3) << to_string(kind) << " step " << r.step;
  }
}

TEST(Train, SfUsesFreshLabelsPerStep) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  TrainConfig a = config_for(OptimizerKind::kSf, 0.05), b = a;
  b.seed = 12;
  EXPECT_NE(train(spec, small_mixture(), a).final_theta().values(),
            train(spec, small_mixture(), b).final_theta().values());
}

TEST(Train, Preconditions) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  TrainConfig c = config_for(OptimizerKind::kSgd, 0.1);
  c.batch_size = 0;
  EXPECT_EQ(code_of([&] { train(spec, small_mixture(), c); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { train(ModelSpec::mlp(5, {5}, 3), small_mixture(), config_for(OptimizerKind::kSgd, 0.1)); }),
            ErrorCode::kShapeMismatch);
}

class CheckpointFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("natgrad-ck-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointFiles, SaveLoadSaveIsBitIdentical) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const ParameterVector theta = init_parameters(spec, 3);
  write_checkpoint(dir_ / "a.bin", spec, theta);
  const ParameterVector back = read_checkpoint(dir_ / "a.bin", spec);
  EXPECT_EQ(back.values(), theta.values());
  write_checkpoint(dir_ / "b.bin", spec, back);
  EXPECT_EQ(read_file_bytes(dir_ / "a.bin"), read_file_bytes(dir_ / "b.bin"));
}

TEST_F(CheckpointFiles, HeaderLayout) {
  const ModelSpec spec = ModelSpec::least_squares(1);
  const auto bytes = encode_checkpoint(spec, testing::params(spec, {1.0, -2.0}));
  ASSERT_EQ(bytes.size(), 4u + 4 + 8 + 8 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NGCK");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  // 1.0 little-endian: 00 .. 00 f0 3f.
  EXPECT_EQ(bytes[24 + 6], 0xf0);
  EXPECT_EQ(bytes[24 + 7], 0x3f);
}

TEST_F(CheckpointFiles, Errors) {
  const ModelSpec spec = ModelSpec::mlp(4, {5}, 3);
  const auto bytes = encode_checkpoint(spec, init_parameters(spec, 1));
  EXPECT_EQ(code_of([&] { read_checkpoint(dir_ / "missing.bin", spec); }), ErrorCode::kMissingCheckpoint);
  EXPECT_EQ(code_of([&] { decode_checkpoint(bytes, ModelSpec::mlp(4, {6}, 3)); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([&] { decode_checkpoint(bytes, ModelSpec::mlp(4, {5}, 3, Activation::kIdentity)); }),
            ErrorCode::kShapeMismatch);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_EQ(code_of([&] { decode_checkpoint(truncated, spec); }), ErrorCode::kParseError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad_magic, spec); }), ErrorCode::kParseError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad_version, spec); }), ErrorCode::kParseError);
}

TEST(Metrics, CsvLayout) {
  const ModelSpec spec = testing::lls_spec();
  TrainConfig c = config_for(OptimizerKind::kIef, 1.0, 1);
  c.batch_size = 2;
  const TrainRun run = train(spec, testing::lls_data(), c, testing::params(spec, {1, 1}));
  std::ostringstream os;
  write_metrics_csv(os, run);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "step,epoch,loss,update_norm,eta,status");
  EXPECT_EQ(row.substr(0, 9), "0,1,1.25,");
  EXPECT_EQ(row.substr(row.size() - 3), ",ok");
}

}  // namespace
}  // namespace natgrad

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

#include "natgrad/config.hpp"
#include "test_support.hpp"

namespace natgrad {
namespace {

using testing::code_of;

ExperimentConfig parse(std::string_view text) {
  KeyValueConfig kv = KeyValueConfig::parse(text);
  return parse_experiment(kv);
}

std::string config_error(std::string_view text) {
  try {
    parse(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << text;
  return {};
}

TEST(KeyValue, ScalarsListsSectionsAndComments) {
  KeyValueConfig kv = KeyValueConfig::parse(
      "# header\n"
      "a = 1.5   # trailing\n"
      "s = \"x # not a comment\"\n"
      "[train]\n"
      "list = [\"sgd\", \"ief\"]\n"
      "nums = [1, 2, 3]\n"
      "flag = true\n");
  EXPECT_DOUBLE_EQ(kv.get_double("a", 0.0), 1.5);
  EXPECT_EQ(kv.get_string("s", ""), "x # not a comment");
  EXPECT_EQ(kv.get_list("train.list", {}), (std::vector<std::string>{"sgd", "ief"}));
  EXPECT_EQ(kv.get_size_list("train.nums", {}), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_TRUE(kv.get_bool("train.flag", false));
  EXPECT_EQ(kv.get_size("missing", 7), 7u);
  EXPECT_TRUE(kv.unused_keys().empty());
}

TEST(KeyValue, TracksUnusedKeys) {
  KeyValueConfig kv = KeyValueConfig::parse("a = 1\nb = 2\n");
  kv.get_size("a", 0);
  EXPECT_EQ(kv.unused_keys(), (std::vector<std::string>{"b"}));
}

TEST(KeyValue, SyntaxErrors) {
  EXPECT_EQ(code_of([] { KeyValueConfig::parse("a = 1\na = 2\n"); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([] { KeyValueConfig::parse("[train\n"); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([] { KeyValueConfig::parse("a =\n"); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([] { KeyValueConfig::parse("just words\n"); }), ErrorCode::kConfigError);
  KeyValueConfig kv = KeyValueConfig::parse("n = -3\nx = abc\nl = 1, 2\n");
  EXPECT_EQ(code_of([&] { kv.get_size("n", 0); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([&] { kv.get_double("x", 0); }), ErrorCode::kConfigError);
  EXPECT_EQ(code_of([&] { kv.get_list("l", {}); }), ErrorCode::kConfigError);
}

TEST(Experiment, Defaults) {
  const ExperimentConfig c = parse("");
  EXPECT_EQ(c.data.kind, DatasetConfig::Kind::kSynthetic);
  EXPECT_EQ(c.train.methods, (std::vector<OptimizerKind>{OptimizerKind::kSgd}));
  EXPECT_EQ(c.eta_for(OptimizerKind::kSgd), 0.1);
  EXPECT_EQ(c.eta_for(OptimizerKind::kAdam), 1e-3);
  EXPECT_EQ(c.eval.batches, 5u);
  EXPECT_EQ(c.sweep.points, 10u);
  EXPECT_DOUBLE_EQ(c.train.damping.value, 1e-12);
  EXPECT_TRUE(c.train.damping.relative);
  EXPECT_EQ(c.schedule_for(OptimizerKind::kEf, 10).kind, ScheduleKind::kNormalizedLinearDecay);
  EXPECT_EQ(c.schedule_for(OptimizerKind::kIef, 10).kind, ScheduleKind::kConstant);
}

TEST(Experiment, FullFile) {
  const ExperimentConfig c = parse(
      "seed = 3\nout = \"runs\"\n"
      "[model]\nhidden = [16, 8]\nactivation = \"identity\"\n"
      "[data]\nn = 64\ndim = 4\nclasses = 2\n"
      "[train]\nmethods = [\"ief\", \"sgd\"]\nseeds = [1, 2]\nepochs = 4\nbatch_size = 8\n"
      "eta = 0.5\neta.sgd = 0.01\nschedule = \"multistep\"\ndecay_epochs = 2\ndecay_factor = 0.5\n"
      "damping = 1e-6\ndamping_relative = false\n"
      "[eval]\nmethods = [\"sgd\", \"ief\"]\nstages = \"first-middle-last\"\n"
      "[sweep]\nlambda_min = 1e-8\nlambda_max = 1\npoints = 3\n");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.out, "runs");
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.model.activation, Activation::kIdentity);
  EXPECT_EQ(c.data.mixture.n, 64u);
  EXPECT_EQ(c.train.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.eta_for(OptimizerKind::kIef), 0.5);
  EXPECT_EQ(c.eta_for(OptimizerKind::kSgd), 0.01);
  const ScheduleSpec s = c.schedule_for(OptimizerKind::kIef, 8);
  EXPECT_EQ(s.kind, ScheduleKind::kMultistep);
  EXPECT_EQ(s.decay_every, 16u);
  EXPECT_EQ(s.decay_factor, 0.5);
  EXPECT_FALSE(c.train.damping.relative);
  EXPECT_FALSE(c.eval.all_stages);
  EXPECT_EQ(c.sweep.points, 3u);

  Batch data = load_dataset(c.data, c.model.kind);
  const ModelSpec spec = c.model_spec(data);
  EXPECT_EQ(spec.widths, (std::vector<std::size_t>{4, 16, 8, 2}));
}

TEST(Experiment, ToySectionAndToyData) {
  const ExperimentConfig c = parse(
      "data.kind = \"toy-lls\"\ntrain.init = [1.0, 1.0]\n"
      "toy.problems = [\"logistic\"]\ntoy.grid = 5\ntoy.starts.logistic = [0.5, 0.5, -1, 1]\n");
  EXPECT_EQ(c.model.kind, ModelKind::kLinearLeastSquares);
  EXPECT_EQ(c.train.init, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(c.toy.problems, (std::vector<ToyProblem>{ToyProblem::kLogistic}));
  EXPECT_EQ(c.toy.grid.n0, 5u);
  EXPECT_EQ(c.toy.starts.at(ToyProblem::kLogistic), (std::vector<std::array<double, 2>>{{0.5, 0.5}, {-1, 1}}));
  const Batch d = load_dataset(c.data, c.model.kind);
  EXPECT_EQ(d.targets, (std::vector<double>{0.0, 0.0}));
}

TEST(Experiment, ErrorsNameTheKey) {
  EXPECT_NE(config_error("train.epocs = 3\n").find("unknown key 'train.epocs'"), std::string::npos);
  EXPECT_NE(config_error("train.methods = [\"newton\"]\n").find("train.methods"), std::string::npos);
  EXPECT_NE(config_error("eval.methods = [\"ief\"]\n").find("eval.methods"), std::string::npos);
  EXPECT_NE(config_error("data.kind = \"parquet\"\n").find("data.kind"), std::string::npos);
  EXPECT_NE(config_error("data.kind = \"csv\"\n").find("data.path"), std::string::npos);
  EXPECT_NE(config_error("train.batch_size = 0\n").find("train.batch_size"), std::string::npos);
  EXPECT_NE(config_error("sweep.lambda_min = 10\nsweep.lambda_max = 1\n").find("sweep"), std::string::npos);
  EXPECT_NE(config_error("train.eta.ief = -1\n").find("train.eta.ief"), std::string::npos);
  EXPECT_NE(config_error("toy.grid = 0\n").find("toy.grid"), std::string::npos);
  EXPECT_NE(config_error("train.epochs = \"many\"\n").find("train.epochs"), std::string::npos);
}

TEST(Experiment, ShippedConfigsParse) {
  for (const char* name : {"toy.toml", "lls-toy-train.toml"}) {
    const ExperimentConfig c = load_experiment(std::filesystem::path(NATGRAD_SOURCE_DIR) / "configs" / name);
    EXPECT_FALSE(c.source_text.empty()) << name;
  }
  EXPECT_EQ(code_of([] { load_experiment("/nonexistent/natgrad.toml"); }), ErrorCode::kConfigError);
}

}  // namespace
}  // namespace natgrad

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

// Experiment configuration: flat `key = value` text (a TOML subset with
// dotted keys, quoted strings, numbers, booleans and one-line arrays).
// Every key must be consumed by the schema; leftovers are rejected.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/data.hpp"
#include "natgrad/evaluation.hpp"
#include "natgrad/models.hpp"
#include "natgrad/optim.hpp"
#include "natgrad/toyviz.hpp"
#include "natgrad/updates.hpp"

namespace natgrad {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback);
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& fallback);

  /// Keys never read, sorted.
  std::vector<std::string> unused_keys() const;
  const std::string& text() const { return text_; }

 private:
  std::string raw(const std::string& key);
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> used_;
  std::string text_;
};

struct DatasetConfig {
  enum class Kind { kSynthetic, kCsv, kIdx, kToyLls, kToyLogistic };
  Kind kind = Kind::kSynthetic;
  MixtureSpec mixture;
  std::filesystem::path path;    // csv
  std::filesystem::path images;  // idx
  std::filesystem::path labels;  // idx
  std::size_t classes = 0;       // 0: largest label + 1
};

struct ModelConfig {
  ModelKind kind = ModelKind::kMlpSoftmaxCe;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;
};

struct TrainSection {
  std::vector<OptimizerKind> methods{OptimizerKind::kSgd};
  std::vector<std::uint64_t> seeds{0};
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::map<OptimizerKind, double> eta;                    // per-method η₀
  std::optional<ScheduleKind> schedule;                   // empty: per-method default
  std::size_t decay_epochs = 0;
  double decay_factor = 0.1;
  Damping damping;
  AdamConfig adam;
  std::vector<double> init;  // explicit θ₀; empty: seeded Glorot init
};

struct EvalSection {
  std::filesystem::path checkpoints;  // directory of checkpoint-epoch-*.bin
  std::vector<UpdateMethod> methods{UpdateMethod::kSgd, UpdateMethod::kEf, UpdateMethod::kIef, UpdateMethod::kSf};
  std::size_t batch_size = 64;
  std::size_t batches = 5;
  Damping damping;
  std::size_t cg_iters = 0;
  bool all_stages = true;  // false: first, middle and last checkpoints only
};

struct SweepSection {
  double lambda_min = 1e-12;
  double lambda_max = 1e3;
  std::size_t points = 10;
  bool relative = true;
  std::vector<UpdateMethod> methods{UpdateMethod::kEf, UpdateMethod::kIef, UpdateMethod::kSf};
};

struct ToySection {
  std::vector<ToyProblem> problems{ToyProblem::kLeastSquares, ToyProblem::kLogistic};
  GridSpec grid;
  TrajectoryOptions trajectory;
  std::map<ToyProblem, std::vector<std::array<double, 2>>> starts;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::filesystem::path out = "natgrad-out";
  ModelConfig model;
  DatasetConfig data;
  TrainSection train;
  EvalSection eval;
  SweepSection sweep;
  ToySection toy;
  std::string source_text;

  /// Model spec with input and output widths taken from the dataset.
  ModelSpec model_spec(const Batch& dataset) const;
  double eta_for(OptimizerKind kind) const;
  ScheduleSpec schedule_for(OptimizerKind kind, std::size_t steps_per_epoch) const;
};

/// Reads every schema key, then throws ConfigError naming the first unknown
/// key, or any value that fails validation.
ExperimentConfig parse_experiment(KeyValueConfig& kv);
ExperimentConfig load_experiment(const std::filesystem::path& path);

Batch load_dataset(const DatasetConfig& config, ModelKind model);

}  // namespace natgrad

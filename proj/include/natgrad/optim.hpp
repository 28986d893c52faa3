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

// Stochastic training with the exact EF / iEF / SF updates, plain SGD and an
// Adam baseline, together with learning-rate schedules, checkpoint files and
// per-step metrics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/models.hpp"
#include "natgrad/updates.hpp"

namespace natgrad {

enum class OptimizerKind { kSgd, kEf, kIef, kSf, kAdam };
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

enum class ScheduleKind { kConstant, kNormalizedLinearDecay, kMultistep };
std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule(std::string_view text);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kConstant;
  double eta0 = 0.1;
  std::size_t decay_every = 0;  // multistep, in steps; 0 disables decay
  double decay_factor = 0.1;

  void validate() const;
  /// Learning rate at 0-based `step` of `total_steps`.
  double rate(std::size_t step, std::size_t total_steps) const;
  /// Whether raw directions are rescaled to unit norm before applying η.
  bool normalizes() const { return kind == ScheduleKind::kNormalizedLinearDecay; }
};

/// Constant for sgd/ief/adam, normalized linear decay for ef/sf.
ScheduleSpec default_schedule(OptimizerKind kind, double eta0);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSgd;
  ScheduleSpec schedule;
  Damping damping;  // ef / ief / sf
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Record how closely each EF/iEF step satisfies its per-sample reduction law.
  bool check_reduction_laws = false;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;         // mean per-sample loss of the batch before the step
  double update_norm = 0.0;  // ‖θ_{t+1} − θ_t‖
  double eta = 0.0;
  std::string status = "ok";
  // max_n |(J d)_n − r_n| / max(r) with r = 1 (EF) or s (iEF); NaN otherwise.
  double law_residual = 0.0;
};

struct EpochCheckpoint {
  std::size_t epoch = 0;
  ParameterVector theta;
  double train_loss = 0.0;  // mean loss over the whole dataset
};

struct TrainRun {
  ModelSpec spec;
  TrainConfig config;
  ParameterVector initial;
  std::vector<StepRecord> steps;
  std::vector<EpochCheckpoint> checkpoints;
  bool diverged = false;

  const ParameterVector& final_theta() const { return checkpoints.empty() ? initial : checkpoints.back().theta; }
};

/// Trains from `initial` (or a Glorot initialisation seeded with config.seed).
/// A non-finite or > 1e6 batch loss halts the run with `diverged` set and the
/// partial record kept.
TrainRun train(const ModelSpec& spec, const Batch& dataset, const TrainConfig& config,
               std::optional<ParameterVector> initial = std::nullopt);

double mean_loss(const ModelSpec& spec, const ParameterVector& theta, const Batch& data);

// Checkpoint file: "NGCK", u32 version, u64 P, u64 model hash, then P
// little-endian IEEE-754 doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParameterVector& theta);
ParameterVector read_checkpoint(const std::filesystem::path& path, const ModelSpec& spec);
std::vector<unsigned char> encode_checkpoint(const ModelSpec& spec, const ParameterVector& theta);
ParameterVector decode_checkpoint(std::span<const unsigned char> bytes, const ModelSpec& spec);

// CSV: step,epoch,loss,update_norm,eta,status
void write_metrics_csv(std::ostream& os, const TrainRun& run);

}  // namespace natgrad

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

#include "natgrad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "natgrad/error.hpp"

namespace natgrad {

namespace {

constexpr double kDivergenceLoss = 1e6;
constexpr char kCheckpointMagic[4] = {'N', 'G', 'C', 'K'};

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) {
  return seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL * (step + 1);
}

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(sizeof(T) <= 8);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const unsigned char> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) {
    throw Error(ErrorCode::kParseError, "checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t{bytes[pos + i]} << (8 * i);
  pos += sizeof(T);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

// max_n |(J d)_n − r_n| / max(r), over rows kept by the solver.
double law_residual(const BatchLinearization& lin, const DenseVector& d, bool use_sief) {
  DenseVector jd = matvec(lin.jacobian, d);
  double worst = 0.0, scale = 0.0;
  for (std::size_t n = 0; n < lin.batch_size(); ++n) {
    if (norm2(lin.jacobian.row(n)) < kZeroGradientNorm) continue;
    const double r = use_sief ? lin.sief[n] : 1.0;
    scale = std::max(scale, r);
    worst = std::max(worst, std::abs(jd[n] - r));
  }
  return scale > 0.0 ? worst / scale : 0.0;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kEf: return "ef";
    case OptimizerKind::kIef: return "ief";
    case OptimizerKind::kSf: return "sf";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view text) {
  for (auto k : {OptimizerKind::kSgd, OptimizerKind::kEf, OptimizerKind::kIef, OptimizerKind::kSf,
                 OptimizerKind::kAdam}) {
    if (text == to_string(k)) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + std::string(text) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kNormalizedLinearDecay: return "normalized-linear-decay";
    case ScheduleKind::kMultistep: return "multistep";
  }
  return "?";
}

ScheduleKind parse_schedule(std::string_view text) {
  for (auto k : {ScheduleKind::kConstant, ScheduleKind::kNormalizedLinearDecay, ScheduleKind::kMultistep}) {
    if (text == to_string(k)) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown schedule '" + std::string(text) + "'");
}

void ScheduleSpec::validate() const {
  if (!(eta0 >= 0.0) || !std::isfinite(eta0)) throw Error(ErrorCode::kInvalidArgument, "eta0 must be >= 0");
  if (kind == ScheduleKind::kMultistep && !(decay_factor > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "decay_factor must be > 0");
  }
}

double ScheduleSpec::rate(std::size_t step, std::size_t total_steps) const {
  switch (kind) {
    case ScheduleKind::kConstant:
      return eta0;
    case ScheduleKind::kNormalizedLinearDecay:
      if (total_steps == 0) return eta0;
      return eta0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
    case ScheduleKind::kMultistep:
      if (decay_every == 0) return eta0;
      return eta0 * std::pow(decay_factor, static_cast<double>(step / decay_every));
  }
  return eta0;
}

ScheduleSpec default_schedule(OptimizerKind kind, double eta0) {
  ScheduleSpec s;
  s.eta0 = eta0;
  s.kind = (kind == OptimizerKind::kEf || kind == OptimizerKind::kSf) ? ScheduleKind::kNormalizedLinearDecay
                                                                       : ScheduleKind::kConstant;
  return s;
}

double mean_loss(const ModelSpec& spec, const ParameterVector& theta, const Batch& data) {
  if (data.size() == 0) return 0.0;
  ForwardResult fr = forward(spec, theta, data);
  double total = 0.0;
  for (std::size_t n = 0; n < fr.losses.size(); ++n) total += fr.losses[n];
  return total / static_cast<double>(fr.losses.size());
}

TrainRun train(const ModelSpec& spec, const Batch& dataset, const TrainConfig& config,
               std::optional<ParameterVector> initial) {
  spec.validate();
  config.schedule.validate();
  if (config.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (dataset.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty dataset");

  TrainRun run;
  run.spec = spec;
  run.config = config;
  run.initial = initial ? std::move(*initial) : init_parameters(spec, config.seed);
  check_shapes(spec, run.initial, dataset);

  const std::size_t n = dataset.size();
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = per_epoch * config.epochs;

  ParameterVector theta = run.initial;
  const std::size_t p = theta.size();
  DenseVector adam_m(p), adam_v(p);
  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(n);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t stop = std::min(n, start + batch);
      Batch mb = dataset.subset(std::span<const std::size_t>(order).subspan(start, stop - start));
      BatchLinearization lin = batch_linearize(spec, theta, mb);

      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      double total = 0.0;
      for (std::size_t i = 0; i < lin.batch_size(); ++i) total += lin.losses[i];
      rec.loss = total / static_cast<double>(lin.batch_size());
      rec.eta = config.schedule.rate(step, total_steps);
      rec.law_residual = std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(rec.loss) || rec.loss > kDivergenceLoss) {
        rec.status = std::string(to_string(ErrorCode::kDivergenceDetected));
        run.steps.push_back(rec);
        run.diverged = true;
        return run;
      }

      DenseVector d;
      switch (config.optimizer) {
        case OptimizerKind::kSgd:
          d = lin.total_grad;
          break;
        case OptimizerKind::kEf:
          d = ef_update(lin, config.damping.resolve(lin)).direction;
          if (config.check_reduction_laws) rec.law_residual = law_residual(lin, d, false);
          break;
        case OptimizerKind::kIef:
          d = ief_update(lin, config.damping.resolve(lin)).direction;
          if (config.check_reduction_laws) rec.law_residual = law_residual(lin, d, true);
          break;
        case OptimizerKind::kSf: {
          PseudoGradients pg = sample_pseudo_gradients(spec, theta, mb, step_seed(config.seed, step));
          d = sf_update(lin, pg.jacobian, config.damping.resolve(lin)).direction;
          break;
        }
        case OptimizerKind::kAdam: {
          const auto& a = config.adam;
          const double t = static_cast<double>(step + 1);
          const double c1 = 1.0 - std::pow(a.beta1, t), c2 = 1.0 - std::pow(a.beta2, t);
          d = DenseVector(p);
          for (std::size_t i = 0; i < p; ++i) {
            const double g = lin.total_grad[i];
            adam_m[i] = a.beta1 * adam_m[i] + (1.0 - a.beta1) * g;
            adam_v[i] = a.beta2 * adam_v[i] + (1.0 - a.beta2) * g * g;
            d[i] = (adam_m[i] / c1) / (std::sqrt(adam_v[i] / c2) + a.eps);
          }
          break;
        }
      }

      if (config.schedule.normalizes()) {
        const double nd = norm2(d);
        if (nd > 0.0) d = (1.0 / nd) * d;
      }
      axpy(-rec.eta, d, theta.values());
      rec.update_norm = rec.eta * norm2(d);
      if (!all_finite(theta.values())) {
        rec.status = std::string(to_string(ErrorCode::kDivergenceDetected));
        run.steps.push_back(rec);
        run.diverged = true;
        return run;
      }
      run.steps.push_back(rec);
    }
    run.checkpoints.push_back({epoch, theta, mean_loss(spec, theta, dataset)});
  }
  return run;
}

std::vector<unsigned char> encode_checkpoint(const ModelSpec& spec, const ParameterVector& theta) {
  if (theta.size() != spec.num_parameters()) throw Error(ErrorCode::kShapeMismatch, "checkpoint parameter count");
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, theta.size());
  put_le<std::uint64_t>(out, spec.hash());
  for (std::size_t i = 0; i < theta.size(); ++i) put_le<double>(out, theta[i]);
  return out;
}

ParameterVector decode_checkpoint(std::span<const unsigned char> bytes, const ModelSpec& spec) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::kParseError, "bad checkpoint magic at byte 0");
  }
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kParseError, "unsupported checkpoint version " + std::to_string(version) + " at byte 4");
  }
  const auto p = get_le<std::uint64_t>(bytes, pos);
  const auto hash = get_le<std::uint64_t>(bytes, pos);
  if (p != spec.num_parameters() || hash != spec.hash()) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint was written for a different model");
  }
  if (bytes.size() != pos + 8 * p) {
    throw Error(ErrorCode::kParseError, "checkpoint payload length mismatch at byte " + std::to_string(pos));
  }
  DenseVector values(p);
  for (std::size_t i = 0; i < p; ++i) values[i] = get_le<double>(bytes, pos);
  return ParameterVector::from_values(spec, std::move(values));
}

void write_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ParameterVector& theta) {
  const auto bytes = encode_checkpoint(spec, theta);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

ParameterVector read_checkpoint(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kMissingCheckpoint, path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, spec);
}

void write_metrics_csv(std::ostream& os, const TrainRun& run) {
  os << "step,epoch,loss,update_norm,eta,status\n";
  char buf[256];
  for (const auto& r : run.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,", r.step, r.epoch, r.loss, r.update_norm, r.eta);
    os << buf << r.status << '\n';
  }
}

}  // namespace natgrad

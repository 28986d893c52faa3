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

#include "natgrad/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "natgrad/error.hpp"

namespace natgrad {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment outside double quotes.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

std::string unquote(std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view expected) {
  throw Error(ErrorCode::kConfigError, "key '" + key + "': expected " + std::string(expected) + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, std::string_view expected) {
  T out{};
  const std::string v = unquote(text);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, expected);
  return out;
}

std::vector<std::string> split_list(const std::string& key, const std::string& raw) {
  std::string_view v = trim(raw);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad_value(key, raw, "a [list]");
  v = trim(v.substr(1, v.size() - 2));
  std::vector<std::string> items;
  if (v.empty()) return items;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i <= v.size(); ++i) {
    if (i < v.size() && v[i] == '"') quoted = !quoted;
    if (i == v.size() || (v[i] == ',' && !quoted)) {
      std::string item = unquote(v.substr(start, i - start));
      if (item.empty()) bad_value(key, raw, "a list without empty items");
      items.push_back(std::move(item));
      start = i + 1;
    }
  }
  return items;
}

// Converts a library parse failure into a ConfigError naming the key.
template <typename F>
auto with_key(const std::string& key, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw Error(ErrorCode::kConfigError, "key '" + key + "': " + e.what());
  }
}

Damping read_damping(KeyValueConfig& kv, const std::string& prefix) {
  Damping d;
  d.value = kv.get_double(prefix + ".damping", d.value);
  d.relative = kv.get_bool(prefix + ".damping_relative", d.relative);
  if (!(d.value >= 0.0) || !std::isfinite(d.value)) {
    throw Error(ErrorCode::kConfigError, "key '" + prefix + ".damping': must be finite and >= 0");
  }
  return d;
}

std::vector<UpdateMethod> read_update_methods(KeyValueConfig& kv, const std::string& key,
                                              const std::vector<UpdateMethod>& fallback) {
  if (!kv.has(key)) return fallback;
  std::vector<UpdateMethod> out;
  for (const auto& s : kv.get_list(key, {})) out.push_back(with_key(key, [&] { return parse_update_method(s); }));
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  cfg.text_ = std::string(text);
  std::string section;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(strip_comment(text.substr(pos, end - pos)));
    ++line_no;
    pos = end + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || !valid_key(trim(line.substr(1, line.size() - 2)))) {
        throw Error(ErrorCode::kConfigError, "line " + std::to_string(line_no) + ": bad section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2))) + ".";
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw Error(ErrorCode::kConfigError, "line " + std::to_string(line_no) + ": bad key");
    if (value.empty()) {
      throw Error(ErrorCode::kConfigError, "key '" + section + std::string(key) + "': missing value");
    }
    const std::string full = section + std::string(key);
    if (!cfg.values_.emplace(full, std::string(value)).second) {
      throw Error(ErrorCode::kConfigError, "key '" + full + "': duplicate");
    }
    cfg.used_[full] = false;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kConfigError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string KeyValueConfig::raw(const std::string& key) {
  used_[key] = true;
  return values_.at(key);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  return has(key) ? unquote(raw(key)) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  return has(key) ? parse_number<double>(key, raw(key), "a number") : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) {
  return has(key) ? parse_number<std::size_t>(key, raw(key), "a non-negative integer") : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  return has(key) ? parse_number<std::uint64_t>(key, raw(key), "a non-negative integer") : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const std::string v = unquote(raw(key));
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key, const std::vector<std::string>& fallback) {
  return has(key) ? split_list(key, raw(key)) : fallback;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key, const std::vector<double>& fallback) {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(key, raw(key))) out.push_back(parse_number<double>(key, s, "a list of numbers"));
  return out;
}

std::vector<std::size_t> KeyValueConfig::get_size_list(const std::string& key,
                                                       const std::vector<std::size_t>& fallback) {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& s : split_list(key, raw(key))) {
    out.push_back(parse_number<std::size_t>(key, s, "a list of non-negative integers"));
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, used] : used_) {
    if (!used) out.push_back(k);
  }
  return out;
}

ExperimentConfig parse_experiment(KeyValueConfig& kv) {
  ExperimentConfig c;
  c.source_text = kv.text();
  c.seed = kv.get_u64("seed", c.seed);
  c.threads = kv.get_size("threads", c.threads);
  c.out = kv.get_string("out", c.out.string());

  c.model.kind = with_key("model.kind", [&] { return parse_model_kind(kv.get_string("model.kind", "mlp-softmax-ce")); });
  c.model.hidden = kv.get_size_list("model.hidden", {});
  c.model.activation =
      with_key("model.activation", [&] { return parse_activation(kv.get_string("model.activation", "relu")); });

  const std::string data_kind = kv.get_string("data.kind", "synthetic");
  using DK = DatasetConfig::Kind;
  if (data_kind == "synthetic") c.data.kind = DK::kSynthetic;
  else if (data_kind == "csv") c.data.kind = DK::kCsv;
  else if (data_kind == "idx") c.data.kind = DK::kIdx;
  else if (data_kind == "toy-lls") c.data.kind = DK::kToyLls;
  else if (data_kind == "toy-logistic") c.data.kind = DK::kToyLogistic;
  else bad_value("data.kind", data_kind, "synthetic, csv, idx, toy-lls or toy-logistic");
  auto& mix = c.data.mixture;
  mix.n = kv.get_size("data.n", mix.n);
  mix.dim = kv.get_size("data.dim", mix.dim);
  mix.classes = kv.get_size("data.classes", mix.classes);
  mix.seed = kv.get_u64("data.seed", mix.seed);
  mix.clusters_per_class = kv.get_size("data.clusters_per_class", mix.clusters_per_class);
  mix.separation = kv.get_double("data.separation", mix.separation);
  mix.noise = kv.get_double("data.noise", mix.noise);
  c.data.classes = c.data.kind == DK::kSynthetic ? mix.classes : (kv.has("data.classes") ? mix.classes : 0);
  c.data.path = kv.get_string("data.path", "");
  c.data.images = kv.get_string("data.images", "");
  c.data.labels = kv.get_string("data.labels", "");
  if (c.data.kind == DK::kSynthetic) with_key("data", [&] { mix.validate(); return 0; });
  if (c.data.kind == DK::kCsv && c.data.path.empty()) {
    throw Error(ErrorCode::kConfigError, "key 'data.path': required for csv data");
  }
  if (c.data.kind == DK::kIdx && (c.data.images.empty() || c.data.labels.empty() || c.data.classes == 0)) {
    throw Error(ErrorCode::kConfigError, "keys 'data.images', 'data.labels', 'data.classes': required for idx data");
  }
  const bool toy_data = c.data.kind == DK::kToyLls || c.data.kind == DK::kToyLogistic;
  if (toy_data) {
    c.model.kind = c.data.kind == DK::kToyLls ? ModelKind::kLinearLeastSquares : ModelKind::kLogisticBinary;
    c.model.hidden.clear();
  }

  auto& t = c.train;
  t.methods.clear();
  for (const auto& s : kv.get_list("train.methods", {"sgd"})) {
    t.methods.push_back(with_key("train.methods", [&] { return parse_optimizer(s); }));
  }
  t.seeds.clear();
  for (const auto& s : kv.get_list("train.seeds", {std::to_string(c.seed)})) {
    t.seeds.push_back(parse_number<std::uint64_t>("train.seeds", s, "non-negative integers"));
  }
  t.epochs = kv.get_size("train.epochs", t.epochs);
  t.batch_size = kv.get_size("train.batch_size", t.batch_size);
  if (t.batch_size == 0) throw Error(ErrorCode::kConfigError, "key 'train.batch_size': must be >= 1");
  const double eta_all = kv.get_double("train.eta", 0.0);
  for (auto k : {OptimizerKind::kSgd, OptimizerKind::kEf, OptimizerKind::kIef, OptimizerKind::kSf,
                 OptimizerKind::kAdam}) {
    const std::string key = "train.eta." + std::string(to_string(k));
    const double fallback = eta_all > 0.0 ? eta_all : (k == OptimizerKind::kAdam ? 1e-3 : 0.1);
    const double eta = kv.get_double(key, fallback);
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorCode::kConfigError, "key '" + key + "': must be >= 0");
    t.eta[k] = eta;
  }
  const std::string schedule = kv.get_string("train.schedule", "default");
  if (schedule != "default") t.schedule = with_key("train.schedule", [&] { return parse_schedule(schedule); });
  t.decay_epochs = kv.get_size("train.decay_epochs", t.decay_epochs);
  t.decay_factor = kv.get_double("train.decay_factor", t.decay_factor);
  t.damping = read_damping(kv, "train");
  t.adam.beta1 = kv.get_double("train.adam_beta1", t.adam.beta1);
  t.adam.beta2 = kv.get_double("train.adam_beta2", t.adam.beta2);
  t.adam.eps = kv.get_double("train.adam_eps", t.adam.eps);
  t.init = kv.get_double_list("train.init", {});

  auto& e = c.eval;
  e.checkpoints = kv.get_string("eval.checkpoints", "");
  e.methods = read_update_methods(kv, "eval.methods", e.methods);
  if (std::find(e.methods.begin(), e.methods.end(), UpdateMethod::kSgd) == e.methods.end()) {
    throw Error(ErrorCode::kConfigError, "key 'eval.methods': must include sgd");
  }
  e.batch_size = kv.get_size("eval.batch_size", e.batch_size);
  e.batches = kv.get_size("eval.batches", e.batches);
  if (e.batch_size == 0 || e.batches == 0) {
    throw Error(ErrorCode::kConfigError, "keys 'eval.batch_size', 'eval.batches': must be >= 1");
  }
  e.damping = read_damping(kv, "eval");
  e.cg_iters = kv.get_size("eval.cg_iters", e.cg_iters);
  const std::string stages = kv.get_string("eval.stages", "all");
  if (stages != "all" && stages != "first-middle-last") bad_value("eval.stages", stages, "all or first-middle-last");
  e.all_stages = stages == "all";

  auto& s = c.sweep;
  s.lambda_min = kv.get_double("sweep.lambda_min", s.lambda_min);
  s.lambda_max = kv.get_double("sweep.lambda_max", s.lambda_max);
  s.points = kv.get_size("sweep.points", s.points);
  s.relative = kv.get_bool("sweep.relative", s.relative);
  s.methods = read_update_methods(kv, "sweep.methods", s.methods);
  with_key("sweep", [&] { SweepGrid::log_spaced(s.lambda_min, s.lambda_max, s.points, s.relative).validate(); return 0; });

  auto& toy = c.toy;
  if (kv.has("toy.problems")) {
    toy.problems.clear();
    for (const auto& p : kv.get_list("toy.problems", {})) {
      toy.problems.push_back(with_key("toy.problems", [&] { return parse_toy(p); }));
    }
  }
  toy.grid.n0 = toy.grid.n1 = kv.get_size("toy.grid", toy.grid.n0);
  toy.grid.lo0 = toy.grid.lo1 = kv.get_double("toy.lo", toy.grid.lo0);
  toy.grid.hi0 = toy.grid.hi1 = kv.get_double("toy.hi", toy.grid.hi0);
  with_key("toy.grid", [&] { toy.grid.validate(); return 0; });
  toy.trajectory.step_norm = kv.get_double("toy.step_norm", toy.trajectory.step_norm);
  toy.trajectory.max_steps = kv.get_size("toy.max_steps", toy.trajectory.max_steps);
  toy.trajectory.loss_tolerance = kv.get_double("toy.loss_tolerance", toy.trajectory.loss_tolerance);
  if (!(toy.trajectory.step_norm > 0.0)) throw Error(ErrorCode::kConfigError, "key 'toy.step_norm': must be > 0");
  for (auto p : {ToyProblem::kLeastSquares, ToyProblem::kLogistic}) {
    const std::string key = "toy.starts." + std::string(to_string(p));
    std::vector<std::array<double, 2>> starts;
    if (kv.has(key)) {
      const auto flat = kv.get_double_list(key, {});
      if (flat.size() % 2 != 0) bad_value(key, "odd count", "pairs θ₀, θ₁");
      for (std::size_t i = 0; i < flat.size(); i += 2) starts.push_back({flat[i], flat[i + 1]});
    } else {
      starts = default_starts(p);
    }
    toy.starts[p] = std::move(starts);
  }

  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw Error(ErrorCode::kConfigError, "unknown key '" + unused.front() + "'");
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  KeyValueConfig kv = KeyValueConfig::load(path);
  return parse_experiment(kv);
}

ModelSpec ExperimentConfig::model_spec(const Batch& dataset) const {
  const std::size_t d = dataset.inputs.cols();
  switch (model.kind) {
    case ModelKind::kLinearLeastSquares:
      return ModelSpec::least_squares(d, model.hidden, model.activation);
    case ModelKind::kLogisticBinary:
      return ModelSpec::logistic(d, model.hidden, model.activation);
    case ModelKind::kMlpSoftmaxCe: {
      std::size_t classes = data.classes;
      if (classes == 0) {
        for (int y : dataset.labels) classes = std::max(classes, static_cast<std::size_t>(y) + 1);
      }
      return ModelSpec::mlp(d, model.hidden, std::max<std::size_t>(classes, 2), model.activation);
    }
  }
  return {};
}

double ExperimentConfig::eta_for(OptimizerKind kind) const { return train.eta.at(kind); }

ScheduleSpec ExperimentConfig::schedule_for(OptimizerKind kind, std::size_t steps_per_epoch) const {
  ScheduleSpec s = default_schedule(kind, eta_for(kind));
  if (train.schedule) s.kind = *train.schedule;
  s.decay_every = train.decay_epochs * steps_per_epoch;
  s.decay_factor = train.decay_factor;
  return s;
}

Batch load_dataset(const DatasetConfig& config, ModelKind model) {
  const bool regression = model == ModelKind::kLinearLeastSquares;
  using DK = DatasetConfig::Kind;
  switch (config.kind) {
    case DK::kSynthetic:
      return make_gaussian_mixture(config.mixture);
    case DK::kCsv:
      return load_csv_dataset(config.path, config.classes, regression);
    case DK::kIdx:
      return load_idx_dataset(config.images, config.labels, config.classes);
    case DK::kToyLls:
      return toy_data(ToyProblem::kLeastSquares);
    case DK::kToyLogistic:
      return toy_data(ToyProblem::kLogistic);
  }
  return {};
}

}  // namespace natgrad

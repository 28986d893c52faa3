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

#include "natgrad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <random>

#include "natgrad/config.hpp"
#include "natgrad/error.hpp"
#include "natgrad/kernels.hpp"
#include "natgrad/selftest.hpp"

namespace natgrad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string subcommand;
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct Session {
  Options opts;
  ExperimentConfig cfg;
  fs::path out;
  std::vector<std::string> outputs;  // relative to `out`
  std::ostream& log;

  void write(const fs::path& rel, const std::function<void(std::ostream&)>& body) {
    const fs::path path = out / rel;
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    body(os);
    if (!os) throw Error(ErrorCode::kIoError, "short write to " + path.string());
    outputs.push_back(rel.generic_string());
  }
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint-epoch-%04zu.bin", epoch);
  return buf;
}

std::string run_name(OptimizerKind k, std::uint64_t seed) {
  return std::string(to_string(k)) + "-seed" + std::to_string(seed);
}

void write_manifest(Session& s, const std::string& status, const json& extra) {
  json overrides = json::object();
  if (s.opts.seed) overrides["seed"] = *s.opts.seed;
  if (!s.opts.out.empty()) overrides["out"] = s.opts.out;
  const std::string keyed = std::string(kVersion) + "\n" + s.opts.subcommand + "\n" + overrides.dump() + "\n" +
                            s.cfg.source_text;
  json m;
  m["tool"] = "natgrad";
  m["version"] = kVersion;
  m["subcommand"] = s.opts.subcommand;
  m["config_path"] = s.opts.config_path;
  m["config"] = s.cfg.source_text;
  m["overrides"] = overrides;
  m["hash"] = content_hash(keyed);
  m["status"] = status;
  m["outputs"] = s.outputs;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  const fs::path path = s.out / "manifest.json";
  fs::create_directories(s.out);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  os << m.dump(2) << '\n';
}

// Loads the dataset and model, and validates their compatibility up front.
std::pair<Batch, ModelSpec> load_problem(const ExperimentConfig& cfg) {
  Batch data = load_dataset(cfg.data, cfg.model.kind);
  ModelSpec spec = cfg.model_spec(data);
  spec.validate();
  check_shapes(spec, ParameterVector::zeros(spec), data);
  return {std::move(data), std::move(spec)};
}

json problem_json(const ModelSpec& spec, const Batch& data) {
  return {{"model", spec.describe()}, {"parameters", spec.num_parameters()},
          {"dataset_checksum", hex64(dataset_checksum(data))}, {"dataset_size", data.size()}};
}

int cmd_train(Session& s) {
  auto [data, spec] = load_problem(s.cfg);
  const auto& t = s.cfg.train;
  if (t.epochs == 0) {
    write_manifest(s, "ok", problem_json(spec, data));
    s.log << "zero epochs: manifest only\n";
    return kExitOk;
  }
  const std::size_t batch = std::min(t.batch_size, data.size());
  const std::size_t per_epoch = (data.size() + batch - 1) / batch;
  bool diverged = false;
  json runs = json::array();
  for (OptimizerKind method : t.methods) {
    for (std::uint64_t seed : t.seeds) {
      TrainConfig tc;
      tc.optimizer = method;
      tc.schedule = s.cfg.schedule_for(method, per_epoch);
      tc.damping = t.damping;
      tc.epochs = t.epochs;
      tc.batch_size = batch;
      tc.seed = seed;
      tc.adam = t.adam;
      std::optional<ParameterVector> init;
      if (!t.init.empty()) {
        if (t.init.size() != spec.num_parameters()) {
          throw Error(ErrorCode::kConfigError, "key 'train.init': expected " + std::to_string(spec.num_parameters()) +
                                                   " values");
        }
        init = ParameterVector::from_values(spec, DenseVector(t.init));
      }
      const TrainRun run = train(spec, data, tc, init);
      const fs::path dir = fs::path("train") / run_name(method, seed);
      s.write(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, run); });
      s.write(dir / "epochs.csv", [&](std::ostream& os) {
        os << "epoch,train_loss\n";
        char buf[64];
        for (const auto& c : run.checkpoints) {
          std::snprintf(buf, sizeof buf, "%zu,%.17g\n", c.epoch, c.train_loss);
          os << buf;
        }
      });
      for (const auto& c : run.checkpoints) {
        const fs::path rel = dir / checkpoint_name(c.epoch);
        fs::create_directories((s.out / rel).parent_path());
        write_checkpoint(s.out / rel, spec, c.theta);
        s.outputs.push_back(rel.generic_string());
      }
      const double final_loss = run.checkpoints.empty() ? std::nan("") : run.checkpoints.back().train_loss;
      s.log << run_name(method, seed) << ": " << run.steps.size() << " steps, final train loss " << final_loss
            << (run.diverged ? " (diverged)" : "") << '\n';
      runs.push_back({{"method", to_string(method)}, {"seed", seed}, {"steps", run.steps.size()},
                      {"diverged", run.diverged}, {"eta0", tc.schedule.eta0},
                      {"schedule", to_string(tc.schedule.kind)},
                      {"final_train_loss", std::isfinite(final_loss) ? json(final_loss) : json(nullptr)}});
      diverged |= run.diverged;
    }
  }
  json extra = problem_json(spec, data);
  extra["runs"] = runs;
  write_manifest(s, diverged ? "diverged" : "ok", extra);
  return diverged ? kExitDivergence : kExitOk;
}

struct CheckpointFile {
  std::string name;  // file stem
  fs::path path;
};

std::vector<CheckpointFile> find_checkpoints(const Session& s) {
  fs::path dir = s.cfg.eval.checkpoints;
  if (dir.empty()) dir = s.out / "train" / run_name(s.cfg.train.methods.front(), s.cfg.train.seeds.front());
  std::vector<CheckpointFile> found;
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("checkpoint-epoch-", 0) == 0 && entry.path().extension() == ".bin") {
        found.push_back({entry.path().stem().string(), entry.path()});
      }
    }
  }
  if (found.empty()) throw Error(ErrorCode::kMissingCheckpoint, "no checkpoint-epoch-*.bin in " + dir.string());
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return found;
}

std::vector<CheckpointFile> first_middle_last(std::vector<CheckpointFile> all) {
  if (all.size() <= 3) return all;
  return {all.front(), all[(all.size() - 1) / 2], all.back()};
}

// Evaluation batches drawn once per command from a seeded generator.
std::vector<Batch> evaluation_batches(const Batch& data, const EvalSection& e, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x6576616cULL);
  std::vector<std::size_t> idx(data.size());
  std::vector<Batch> out;
  const std::size_t m = std::min(e.batch_size, data.size());
  for (std::size_t b = 0; b < e.batches; ++b) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    out.push_back(data.subset(std::span<const std::size_t>(idx).first(m)));
  }
  return out;
}

int cmd_evaluate(Session& s) {
  auto [data, spec] = load_problem(s.cfg);
  auto checkpoints = find_checkpoints(s);
  if (!s.cfg.eval.all_stages) checkpoints = first_middle_last(std::move(checkpoints));
  const auto batches = evaluation_batches(data, s.cfg.eval, s.cfg.seed);
  std::vector<UpdateRequest> requests;
  for (UpdateMethod m : s.cfg.eval.methods) {
    requests.push_back({m, s.cfg.eval.damping, s.cfg.eval.cg_iters, s.cfg.seed});
  }
  std::vector<IndicatorReport> reports;
  std::vector<StageRatios> stages;
  for (const auto& c : checkpoints) {
    const ParameterVector theta = read_checkpoint(c.path, spec);
    EvaluationResult res = evaluate_methods(spec, theta, batches, requests, c.name);
    stages.push_back(stage_ratios(res, c.name));
    reports.insert(reports.end(), res.reports.begin(), res.reports.end());
    s.log << c.name << ": ef/sgd " << stages.back().ef_over_sgd << ", ief/sgd " << stages.back().ief_over_sgd
          << ", sf/ef " << stages.back().sf_over_ef << ", imbalance " << stages.back().imbalance << '\n';
  }
  s.write("evaluate/indicators.csv", [&](std::ostream& os) {
    write_indicator_csv_header(os);
    write_indicator_csv_rows(os, reports);
  });
  s.write("evaluate/stages.csv", [&](std::ostream& os) { write_stage_csv(os, stages); });
  write_manifest(s, "ok", problem_json(spec, data));
  return kExitOk;
}

int cmd_damping_sweep(Session& s) {
  auto [data, spec] = load_problem(s.cfg);
  const auto checkpoints = first_middle_last(find_checkpoints(s));
  const auto batches = evaluation_batches(data, s.cfg.eval, s.cfg.seed);
  const auto& sw = s.cfg.sweep;
  const SweepGrid grid = SweepGrid::log_spaced(sw.lambda_min, sw.lambda_max, sw.points, sw.relative);
  std::vector<SweepRow> rows;
  std::vector<IndicatorReport> reports;
  for (const auto& c : checkpoints) {
    const ParameterVector theta = read_checkpoint(c.path, spec);
    SweepResult res = damping_sweep(spec, theta, batches, grid, sw.methods, c.name, s.cfg.seed);
    rows.insert(rows.end(), res.rows.begin(), res.rows.end());
    reports.insert(reports.end(), res.reports.begin(), res.reports.end());
    s.log << c.name << ": " << res.rows.size() << " sweep cells\n";
  }
  s.write("sweep/sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
  s.write("sweep/indicators.csv", [&](std::ostream& os) {
    write_indicator_csv_header(os);
    write_indicator_csv_rows(os, reports);
  });
  write_manifest(s, "ok", problem_json(spec, data));
  return kExitOk;
}

int cmd_toy(Session& s) {
  const auto& toy = s.cfg.toy;
  for (ToyProblem p : toy.problems) {
    const std::string name(to_string(p));
    const VectorFieldGrid field = compute_field(p, toy.grid);
    s.write(fs::path("toy") / (name + "-field.csv"), [&](std::ostream& os) { write_field_csv(os, field); });
    std::vector<Trajectory> all;
    for (FieldMethod m : kFieldMethods) {
      auto t = trace_trajectories(p, m, toy.starts.at(p), toy.trajectory);
      all.insert(all.end(), t.begin(), t.end());
    }
    s.write(fs::path("toy") / (name + "-trajectories.csv"), [&](std::ostream& os) { write_trajectory_csv(os, all); });
    s.write(fs::path("toy") / (name + "-loci.csv"), [&](std::ostream& os) { write_loci_csv(os, optimal_loci(p)); });
    s.log << name << ": " << field.cells.size() << " field cells, " << all.size() << " trajectories\n";
  }
  write_manifest(s, "ok", json::object());
  return kExitOk;
}

int cmd_selftest(std::ostream& out) {
  const auto results = run_selftest(&out);
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
  for (const auto& r : results) {
    if (!r.passed) out << "failed invariant: " << r.name << (r.id.empty() ? "" : " (" + r.id + ")") << '\n';
  }
  out << (failed == 0 ? "selftest: all checks passed\n" : "selftest: " + std::to_string(failed) + " check(s) failed\n");
  return failed == 0 ? kExitOk : kExitFailure;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return kExitConfig;
    case ErrorCode::kDivergenceDetected: return kExitDivergence;
    case ErrorCode::kMissingCheckpoint: return kExitMissingArtifact;
    default: return kExitFailure;
  }
}

std::optional<int> env_threads() {
  const char* env = std::getenv("NATGRAD_THREADS");
  if (env == nullptr || *env == '\0') return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw Error(ErrorCode::kConfigError, "NATGRAD_THREADS must be a positive integer");
  return static_cast<int>(v);
}

}  // namespace

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"natgrad: exact empirical-Fisher natural-gradient experiments"};
  app.require_subcommand(1);
  Options opts;
  app.name("natgrad");
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train each configured method and seed, saving per-epoch checkpoints"},
      {"evaluate", "score update directions at saved checkpoints"},
      {"damping-sweep", "score update directions across a damping grid"},
      {"toy", "vector fields and trajectories for the 2-parameter toys"},
      {"selftest", "run the numerical invariant checks"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    auto* cfg = sub->add_option("--config", opts.config_path, "experiment config file");
    if (std::string(name) != "selftest") cfg->required();
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--seed", opts.seed, "seed override");
    sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "natgrad: " << e.what() << '\n';
    return kExitConfig;
  }
  opts.subcommand = app.get_subcommands().front()->get_name();

  try {
    std::optional<int> threads = opts.threads ? opts.threads : env_threads();
    if (opts.subcommand == "selftest" && opts.config_path.empty()) {
      if (threads) kernels::set_num_threads(*threads);
      return cmd_selftest(out);
    }
    Session s{opts, load_experiment(opts.config_path), {}, {}, out};
    if (opts.seed) {
      s.cfg.seed = *opts.seed;
      s.cfg.train.seeds = {*opts.seed};
    }
    if (!threads && s.cfg.threads > 0) threads = static_cast<int>(s.cfg.threads);
    if (threads) kernels::set_num_threads(*threads);
    s.out = opts.out.empty() ? s.cfg.out : fs::path(opts.out);

    if (opts.subcommand == "train") return cmd_train(s);
    if (opts.subcommand == "evaluate") return cmd_evaluate(s);
    if (opts.subcommand == "damping-sweep") return cmd_damping_sweep(s);
    if (opts.subcommand == "toy") return cmd_toy(s);
    return cmd_selftest(out);
  } catch (const Error& e) {
    err << "natgrad: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "natgrad: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace natgrad

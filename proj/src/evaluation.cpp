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

#include "natgrad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include "natgrad/error.hpp"

namespace natgrad {

double gamma(const FisherOperator& fvp, std::span<const double> grad, std::span<const double> dtheta) {
  if (grad.size() != dtheta.size()) throw Error(ErrorCode::kShapeMismatch, "gamma: length mismatch");
  const double proj = std::abs(dot(dtheta, grad));
  if (!(proj > 1e-30)) throw Error(ErrorCode::kOrthogonalUpdate, "|Δθᵀg| below 1e-30");
  const DenseVector fd = fvp(dtheta);
  const double quad = std::max(dot(dtheta, fd), 0.0);
  return std::sqrt(quad) / proj;
}

FisherOperator make_fisher_operator(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  return [spec, theta, batch](std::span<const double> v) { return fisher_vector_product(spec, theta, batch, v); };
}

FisherOperator make_fisher_operator(const DenseMatrix& fisher) {
  return [fisher](std::span<const double> v) { return matvec(fisher, v); };
}

double grad_norm_imbalance(const BatchLinearization& lin) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t n = 0; n < lin.batch_size(); ++n) {
    const double r = norm2(lin.jacobian.row(n));
    if (r < kZeroGradientNorm) continue;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (hi == 0.0) throw Error(ErrorCode::kInvalidArgument, "every per-sample gradient vanishes");
  return hi / lo;
}

double lqa_predicted_reduction(double gamma_value) {
  if (!(gamma_value > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be positive");
  return 1.0 / (2.0 * gamma_value * gamma_value);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

namespace {

std::string status_of(const Error& e) { return std::string(to_string(e.code())); }

struct BatchContext {
  BatchLinearization lin;
  FisherOperator fvp;
  double imbalance = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> sgd_gamma;
  std::string sgd_status = "ok";
};

BatchContext prepare_batch(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch) {
  BatchContext ctx;
  ctx.lin = batch_linearize(spec, theta, batch);
  ctx.fvp = make_fisher_operator(spec, theta, batch);
  try {
    ctx.imbalance = grad_norm_imbalance(ctx.lin);
  } catch (const Error&) {
  }
  try {
    ctx.sgd_gamma = gamma(ctx.fvp, ctx.lin.total_grad, ctx.lin.total_grad);
  } catch (const Error& e) {
    ctx.sgd_status = status_of(e);
  }
  return ctx;
}

// Runs one cell; failures become a report with an error status.
IndicatorReport run_cell(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                         const BatchContext& ctx, const UpdateRequest& request, std::size_t batch_idx,
                         const std::string& checkpoint) {
  IndicatorReport rep;
  rep.checkpoint = checkpoint;
  rep.method = request.method;
  rep.batch_idx = batch_idx;
  rep.imbalance = ctx.imbalance;
  try {
    UpdateRequest req = request;
    req.seed = request.seed + batch_idx;
    rep.lambda = request.method == UpdateMethod::kSgd ? 0.0 : request.damping.resolve(ctx.lin);
    if (request.method == UpdateMethod::kSgd) {
      if (!ctx.sgd_gamma) throw Error(ErrorCode::kOrthogonalUpdate, ctx.sgd_status);
      rep.gamma = ctx.sgd_gamma;
    } else {
      const UpdateVector u = generate_update(spec, theta, batch, ctx.lin, req);
      rep.lambda = u.damping;
      rep.gamma = gamma(ctx.fvp, ctx.lin.total_grad, u.direction);
      if (u.dropped_rows > 0) rep.status = "ok-dropped-" + std::to_string(u.dropped_rows);
    }
    if (ctx.sgd_gamma) rep.gamma_ratio_sgd = *rep.gamma / *ctx.sgd_gamma;
  } catch (const Error& e) {
    rep.gamma.reset();
    rep.gamma_ratio_sgd.reset();
    rep.status = status_of(e);
  }
  return rep;
}

}  // namespace

EvaluationResult evaluate_methods(const ModelSpec& spec, const ParameterVector& theta,
                                  std::span<const Batch> batches, std::span<const UpdateRequest> requests,
                                  const std::string& checkpoint) {
  if (batches.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluate_methods needs at least one batch");
  const bool has_sgd = std::any_of(requests.begin(), requests.end(),
                                   [](const UpdateRequest& r) { return r.method == UpdateMethod::kSgd; });
  if (!has_sgd) throw Error(ErrorCode::kInvalidArgument, "sgd must be among the requests");

  EvaluationResult result;
  std::vector<double> imbalances;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchContext ctx = prepare_batch(spec, theta, batches[b]);
    if (std::isfinite(ctx.imbalance)) imbalances.push_back(ctx.imbalance);
    for (const UpdateRequest& req : requests)
      result.reports.push_back(run_cell(spec, theta, batches[b], ctx, req, b, checkpoint));
  }

  for (std::size_t k = 0; k < requests.size(); ++k) {
    MethodSummary s;
    s.method = requests[k].method;
    s.request_index = k;
    std::vector<double> gammas, ratios;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const IndicatorReport& rep = result.reports[b * requests.size() + k];
      if (!rep.ok()) {
        ++s.failed_count;
        continue;
      }
      gammas.push_back(*rep.gamma);
      if (rep.gamma_ratio_sgd) ratios.push_back(*rep.gamma_ratio_sgd);
    }
    s.ok_count = gammas.size();
    s.mean_gamma = mean(gammas);
    s.std_gamma = stddev(gammas);
    s.mean_ratio = mean(ratios);
    s.std_ratio = stddev(ratios);
    result.summary.push_back(s);
  }
  result.mean_imbalance = mean(imbalances);
  return result;
}

SweepGrid SweepGrid::log_spaced(double lo, double hi, std::size_t points, bool relative) {
  SweepGrid g;
  g.relative = relative;
  if (points == 1) {
    g.lambdas = {lo};
  } else {
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < points; ++i)
      g.lambdas.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1)));
  }
  g.validate();
  return g;
}

void SweepGrid::validate() const {
  if (lambdas.empty()) throw Error(ErrorCode::kInvalidArgument, "empty damping grid");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "damping grid values must be > 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw Error(ErrorCode::kInvalidArgument, "damping grid must be strictly ascending");
  }
}

SweepResult damping_sweep(const ModelSpec& spec, const ParameterVector& theta, std::span<const Batch> batches,
                          const SweepGrid& grid, std::span<const UpdateMethod> methods, const std::string& checkpoint,
                          std::uint64_t seed) {
  grid.validate();
  if (batches.empty()) throw Error(ErrorCode::kInvalidArgument, "damping_sweep needs at least one batch");
  SweepResult out;
  const std::size_t cells = grid.lambdas.size() * methods.size();
  std::vector<std::vector<double>> ratios(cells);
  std::vector<std::size_t> failures(cells, 0);

  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchContext ctx = prepare_batch(spec, theta, batches[b]);
    for (std::size_t li = 0; li < grid.lambdas.size(); ++li) {
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        UpdateRequest req;
        req.method = methods[mi];
        req.damping = Damping{grid.lambdas[li], grid.relative};
        req.seed = seed;
        IndicatorReport rep = run_cell(spec, theta, batches[b], ctx, req, b, checkpoint);
        const std::size_t cell = li * methods.size() + mi;
        if (rep.gamma_ratio_sgd) {
          ratios[cell].push_back(*rep.gamma_ratio_sgd);
        } else {
          ++failures[cell];
        }
        out.reports.push_back(std::move(rep));
      }
    }
  }
  for (std::size_t li = 0; li < grid.lambdas.size(); ++li)
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const std::size_t cell = li * methods.size() + mi;
      SweepRow row;
      row.checkpoint = checkpoint;
      row.method = methods[mi];
      row.lambda = grid.lambdas[li];
      row.mean_ratio = mean(ratios[cell]);
      row.std_ratio = stddev(ratios[cell]);
      row.ok_count = ratios[cell].size();
      row.failed_count = failures[cell];
      out.rows.push_back(row);
    }
  return out;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "null"; }

}  // namespace

void write_indicator_csv_header(std::ostream& os) {
  os << "checkpoint,method,lambda,batch_idx,gamma,gamma_ratio_sgd,imbalance,status\n";
}

void write_indicator_csv_rows(std::ostream& os, std::span<const IndicatorReport> reports) {
  for (const auto& r : reports)
    os << r.checkpoint << ',' << to_string(r.method) << ',' << fmt(r.lambda) << ',' << r.batch_idx << ','
       << fmt(r.gamma) << ',' << fmt(r.gamma_ratio_sgd) << ',' << fmt(r.imbalance) << ',' << r.status << '\n';
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows, bool header) {
  if (header) os << "checkpoint,method,lambda,mean_ratio,std_ratio,ok,failed\n";
  for (const auto& r : rows)
    os << r.checkpoint << ',' << to_string(r.method) << ',' << fmt(r.lambda) << ',' << fmt(r.mean_ratio) << ','
       << fmt(r.std_ratio) << ',' << r.ok_count << ',' << r.failed_count << '\n';
}

StageRatios stage_ratios(const EvaluationResult& result, const std::string& checkpoint) {
  // First successful γ of each method per batch.
  std::map<std::size_t, std::map<UpdateMethod, double>> gammas;
  std::map<std::size_t, double> imbalance;
  for (const auto& r : result.reports) {
    imbalance[r.batch_idx] = r.imbalance;
    if (r.ok()) gammas[r.batch_idx].emplace(r.method, *r.gamma);
  }
  std::vector<double> ef_sgd, ief_sgd, sf_ef, imb;
  auto ratio = [](const std::map<UpdateMethod, double>& g, UpdateMethod a, UpdateMethod b, std::vector<double>& out) {
    const auto ia = g.find(a), ib = g.find(b);
    if (ia != g.end() && ib != g.end()) out.push_back(ia->second / ib->second);
  };
  for (const auto& [batch, g] : gammas) {
    ratio(g, UpdateMethod::kEf, UpdateMethod::kSgd, ef_sgd);
    ratio(g, UpdateMethod::kIef, UpdateMethod::kSgd, ief_sgd);
    ratio(g, UpdateMethod::kSf, UpdateMethod::kEf, sf_ef);
  }
  for (const auto& [batch, v] : imbalance) imb.push_back(v);
  StageRatios s;
  s.checkpoint = checkpoint;
  s.ef_over_sgd = mean(ef_sgd);
  s.ef_over_sgd_std = stddev(ef_sgd);
  s.ief_over_sgd = mean(ief_sgd);
  s.ief_over_sgd_std = stddev(ief_sgd);
  s.sf_over_ef = mean(sf_ef);
  s.sf_over_ef_std = stddev(sf_ef);
  s.imbalance = mean(imb);
  s.imbalance_std = stddev(imb);
  return s;
}

void write_stage_csv(std::ostream& os, std::span<const StageRatios> rows) {
  os << "checkpoint,ef_over_sgd,ef_over_sgd_std,ief_over_sgd,ief_over_sgd_std,sf_over_ef,sf_over_ef_std,imbalance,"
        "imbalance_std\n";
  for (const auto& r : rows) {
    os << r.checkpoint << ',' << fmt(r.ef_over_sgd) << ',' << fmt(r.ef_over_sgd_std) << ',' << fmt(r.ief_over_sgd)
       << ',' << fmt(r.ief_over_sgd_std) << ',' << fmt(r.sf_over_ef) << ',' << fmt(r.sf_over_ef_std) << ','
       << fmt(r.imbalance) << ',' << fmt(r.imbalance_std) << '\n';
  }
}

}  // namespace natgrad

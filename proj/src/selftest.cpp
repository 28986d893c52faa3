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

#include "natgrad/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <random>

#include "natgrad/curvature.hpp"
#include "natgrad/error.hpp"
#include "natgrad/evaluation.hpp"
#include "natgrad/flow.hpp"
#include "natgrad/models.hpp"
#include "natgrad/optim.hpp"
#include "natgrad/oracle.hpp"
#include "natgrad/updates.hpp"

namespace natgrad {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

Batch random_batch(const ModelSpec& spec, std::size_t n, Rng& rng) {
  Batch b;
  b.inputs = DenseMatrix(n, spec.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.input_dim(); ++j) b.inputs(i, j) = normal(rng);
  }
  if (spec.is_classification()) {
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng() % spec.classes));
  } else {
    for (std::size_t i = 0; i < n; ++i) b.targets.push_back(normal(rng));
  }
  return b;
}

// Glorot initialisation plus a small perturbation so biases are nonzero.
ParameterVector random_theta(const ModelSpec& spec, Rng& rng) {
  ParameterVector theta = init_parameters(spec, rng());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += 0.1 * normal(rng);
  return theta;
}

struct Instance {
  ModelSpec spec;
  ParameterVector theta;
  Batch batch;
  BatchLinearization lin;
};

// Tiny softmax MLP with P ≤ 64 and N ≤ 8 whose Gram matrix has condition
// number at most `max_condition`.
Instance full_rank_instance(Rng& rng, double max_condition, std::size_t& skipped) {
  while (true) {
    const std::size_t d = pick(rng, 2, 4), h = pick(rng, 3, 6), c = pick(rng, 2, 4);
    Instance inst{ModelSpec::mlp(d, {h}, c), {}, {}, {}};
    inst.theta = random_theta(inst.spec, rng);
    inst.batch = random_batch(inst.spec, pick(rng, 2, 8), rng);
    inst.lin = batch_linearize(inst.spec, inst.theta, inst.batch);
    if (spd_condition(gram(inst.lin.jacobian)) <= max_condition) return inst;
    ++skipped;
  }
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  }
  return worst;
}

DenseMatrix sub_block(const DenseMatrix& m, std::size_t offset, std::size_t size) {
  DenseMatrix out(size, size);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) out(i, j) = m(offset + i, offset + j);
  }
  return out;
}

CheckResult finish(CheckResult r, double worst, double tolerance) {
  r.worst = worst;
  r.tolerance = tolerance;
  r.passed = std::isfinite(worst) && worst <= tolerance;
  return r;
}

// ---------------------------------------------------------------------------

CheckResult check_gradients(double tol) {
  CheckResult r;
  Rng rng(101);
  double worst = 0.0;
  const ModelSpec specs[] = {ModelSpec::mlp(3, {4, 3}, 3), ModelSpec::mlp(2, {5}, 2, Activation::kIdentity),
                             ModelSpec::least_squares(3, {4}), ModelSpec::logistic(2, {3}),
                             ModelSpec::least_squares(1), ModelSpec::logistic(1)};
  for (const auto& spec : specs) {
    for (int rep = 0; rep < 3; ++rep) {
      ParameterVector theta = random_theta(spec, rng);
      Batch batch = random_batch(spec, 4, rng);
      BatchLinearization lin = batch_linearize(spec, theta, batch);
      const double h = 1e-6;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        ParameterVector plus = theta, minus = theta;
        plus[i] += h;
        minus[i] -= h;
        ForwardResult fp = forward(spec, plus, batch), fm = forward(spec, minus, batch);
        for (std::size_t n = 0; n < batch.size(); ++n) {
          const double fd = (fp.losses[n] - fm.losses[n]) / (2.0 * h);
          worst = std::max(worst, std::abs(fd - lin.jacobian(n, i)) / std::max(1.0, std::abs(fd)));
        }
      }
      ++r.instances;
    }
  }
  r.detail = "central differences, h = 1e-6";
  return finish(r, worst, tol);
}

CheckResult check_ef_law(double tol) {
  CheckResult r;
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Instance inst = full_rank_instance(rng, 1e6, r.skipped);
    const double lambda = Damping::trace_relative(1e-10).resolve(inst.lin);
    DenseVector jd = matvec(inst.lin.jacobian, ef_update(inst.lin, lambda).direction);
    for (std::size_t n = 0; n < jd.size(); ++n) worst = std::max(worst, std::abs(jd[n] - 1.0));
    ++r.instances;
  }
  r.detail = "max_n |(J d_EF)_n - 1|, λ = 1e-10 trace-relative";
  return finish(r, worst, tol);
}

CheckResult check_ief_law(double tol) {
  CheckResult r;
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Instance inst = full_rank_instance(rng, 1e6, r.skipped);
    const double lambda = Damping::trace_relative(1e-10).resolve(inst.lin);
    DenseVector jd = matvec(inst.lin.jacobian, ief_update(inst.lin, lambda).direction);
    const double smax = *std::max_element(inst.lin.sief.begin(), inst.lin.sief.end());
    for (std::size_t n = 0; n < jd.size(); ++n) worst = std::max(worst, std::abs(jd[n] - inst.lin.sief[n]) / smax);
    ++r.instances;
  }
  r.detail = "max_n |(J d_iEF)_n - s_n| / max(s), λ = 1e-10 trace-relative";
  return finish(r, worst, tol);
}

CheckResult check_lsq_equivalence(double tol) {
  CheckResult r;
  Rng rng(3);
  double worst = 0.0;
  while (r.instances < 100) {
    const std::size_t d = pick(rng, 1, 5);
    const ModelSpec spec = ModelSpec::least_squares(d);
    const ParameterVector theta = random_theta(spec, rng);
    const Batch batch = random_batch(spec, d + 1, rng);
    const BatchLinearization lin = batch_linearize(spec, theta, batch);
    const DenseMatrix fisher = build_fisher(spec, theta, batch).matrix;
    if (spd_condition(gram(lin.jacobian)) > 1e6) {
      ++r.skipped;
      continue;
    }
    // The equivalence is a λ → 0 statement; any fixed damping leaves a bias
    // of order λ / σ_min(J Jᵀ).
    const DenseVector ief = ief_update(lin, Damping::trace_relative(1e-20).resolve(lin)).direction;
    const DenseVector ngd = ngd_exact_update(fisher, lin.total_grad, 0.0).direction;
    worst = std::max(worst, oracle::relative_error(ief, ngd));
    ++r.instances;
  }

  // One unit iEF step on the two-point toy from (1, 1).
  const ModelSpec toy = ModelSpec::least_squares(1);
  Batch data;
  data.inputs = DenseMatrix{{0.0}, {1.0}};
  data.targets = {0.0, 0.0};
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kIef;
  cfg.schedule.eta0 = 1.0;
  cfg.batch_size = 2;
  TrainRun run = train(toy, data, cfg, ParameterVector::from_values(toy, DenseVector{1.0, 1.0}));
  const auto& th = run.final_theta();
  const double toy_err = std::max(std::abs(th[0]), std::abs(th[1]));
  r.detail = "iEF (λ → 0) vs exact NGD relative error, N = P; toy step |θ| = " + std::to_string(toy_err);
  CheckResult out = finish(r, worst, tol);
  out.passed = out.passed && toy_err <= 1e-10;
  return out;
}

CheckResult check_fisher_ggn(double tol) {
  CheckResult r;
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const ModelSpec spec = ModelSpec::mlp(3, {pick(rng, 3, 5)}, pick(rng, 2, 5));
    const ParameterVector theta = random_theta(spec, rng);
    const Batch batch = random_batch(spec, pick(rng, 1, 6), rng);
    const DenseMatrix explicit_fisher = build_fisher(spec, theta, batch).matrix;
    const std::size_t p = theta.size();
    DenseMatrix assembled(p, p);
    for (std::size_t j = 0; j < p; ++j) {
      DenseVector e(p);
      e[j] = 1.0;
      DenseVector col = fisher_vector_product(spec, theta, batch, e);
      for (std::size_t k = 0; k < p; ++k) assembled(k, j) = col[k];
    }
    worst = std::max(worst, max_abs_diff(assembled, explicit_fisher));
    ++r.instances;
  }
  r.detail = "max |FVP columns - explicit Fisher|";
  return finish(r, worst, tol);
}

CheckResult check_low_rank_solves(double tol) {
  CheckResult r;
  Rng rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = pick(rng, 1, 8), p = pick(rng, n + 1, 64);
    DenseMatrix j(n, p);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < p; ++b) j(a, b) = normal(rng);
    }
    DenseVector rhs(n), v(p);
    for (auto& x : rhs) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    for (double lambda : {1e-8, 1e-4, 1.0}) {
      worst = std::max(worst, oracle::relative_error(woodbury_solve(j, rhs, lambda), oracle::ridge_solve(j, rhs, lambda)));
      worst = std::max(worst, oracle::relative_error(smw_solve(j, v, lambda), oracle::gram_inverse_apply(j, v, lambda)));
    }
    ++r.instances;
  }
  r.detail = "Woodbury and SMW vs extended-precision dense solves, λ ∈ {1e-8, 1e-4, 1}";
  return finish(r, worst, tol);
}

CheckResult check_ief_matrix(double tol) {
  CheckResult r;
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    Instance inst = full_rank_instance(rng, 1e5, r.skipped);
    const DenseMatrix fstar = build_ief(inst.lin).matrix;
    const double dense_lambda = 1e-10 * trace(fstar) / static_cast<double>(inst.lin.batch_size());
    const DenseVector dense = oracle::solve(fstar, inst.lin.total_grad, dense_lambda);
    const DenseVector low_rank = ief_update(inst.lin, Damping::trace_relative(1e-10).resolve(inst.lin)).direction;
    worst = std::max(worst, oracle::relative_error(low_rank, dense));
    ++r.instances;
  }
  r.detail = "(F* + λI)^-1 g vs sample-space iEF update, λ = 1e-10 of each trace scale";
  return finish(r, worst, tol);
}

CheckResult check_gamma_and_cg(double tol) {
  CheckResult r;
  Rng rng(7);
  double worst_opt = -1e300, worst_mono = 0.0, worst_final = 0.0;
  while (r.instances < 10) {
    const ModelSpec spec = ModelSpec::mlp(2, {3}, 3);
    const ParameterVector theta = random_theta(spec, rng);
    const std::size_t p = theta.size();
    const Batch batch = random_batch(spec, p + 3, rng);
    const DenseMatrix fisher = build_fisher(spec, theta, batch).matrix;
    const BatchLinearization lin = batch_linearize(spec, theta, batch);
    const FisherOperator explicit_op = make_fisher_operator(fisher);
    const DenseVector& g = lin.total_grad;
    // Softmax is invariant to a shared logit shift, so F is singular; g lies
    // in its range and the optimum is F⁺g, approached by a vanishing damping.
    const double ridge = 1e-12 * trace(fisher) / static_cast<double>(p);
    double g_opt = 0.0;
    try {
      g_opt = gamma(explicit_op, g, ngd_exact_update(fisher, g, ridge).direction);
    } catch (const Error&) {
      ++r.skipped;
      continue;
    }

    std::vector<DenseVector> candidates = {lin.total_grad,
                                           ef_update(lin, Damping::trace_relative(1e-6).resolve(lin)).direction,
                                           ief_update(lin, Damping::trace_relative(1e-6).resolve(lin)).direction};
    const auto pg = sample_pseudo_gradients(spec, theta, batch, rng());
    candidates.push_back(sf_update(lin, pg.jacobian, Damping::trace_relative(1e-6).resolve(lin)).direction);
    for (int k = 0; k < 5; ++k) {
      DenseVector d(p);
      for (auto& x : d) x = normal(rng);
      candidates.push_back(d);
    }
    for (const auto& d : candidates) worst_opt = std::max(worst_opt, g_opt - gamma(explicit_op, g, d));

    const CgResult cg = ngd_cg_update(make_fisher_operator(spec, theta, batch), g, p, 0.0);
    for (std::size_t k = 1; k < cg.gamma_trace.size(); ++k) {
      worst_mono = std::max(worst_mono, (cg.gamma_trace[k] - cg.gamma_trace[k - 1]) / cg.gamma_trace[k - 1]);
    }
    worst_final = std::max(worst_final, std::abs(cg.gamma_trace.back() - g_opt) / g_opt);
    ++r.instances;
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "max γ_opt - γ_m = %.3g (≤ 1e-8); CG rise %.3g (≤ 1e-10); |γ_CG - γ_opt|/γ_opt = %.3g",
                worst_opt, worst_mono, worst_final);
  r.detail = buf;
  // The three sub-criteria have their own fixed thresholds; `tol` scales them
  // all so the corruption hook still fails the check.
  const double worst = std::max({worst_opt / 1e-8, worst_mono / 1e-10, worst_final / 1e-6});
  return finish(r, worst, tol);
}

CheckResult check_ief_flow_bound(double tol) {
  CheckResult r;
  Rng rng(8);
  double worst_margin = 1e300, worst_rate = 0.0;
  while (r.instances < 10) {
    // Smooth network: across ReLU kinks the discrete flow chatters and the
    // finite-difference loss derivative no longer measures −s_n.
    const ModelSpec spec = ModelSpec::mlp(3, {5}, 3, Activation::kIdentity);
    const ParameterVector theta = random_theta(spec, rng);
    const Batch batch = random_batch(spec, pick(rng, 1, 4), rng);
    const SublinearBoundReport rep = ief_flow_bound_check(spec, theta, batch, {20.0, 1e-3, 1e12});
    if (!rep.completed()) {
      ++r.skipped;
      continue;
    }
    worst_margin = std::min(worst_margin, rep.min_margin);
    worst_rate = std::max(worst_rate, rep.max_rate_residual);
    ++r.instances;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "min bound margin %.3g (≥ -1e-4); max |dl/dt + s| %.3g (≤ 1e-3)", worst_margin,
                worst_rate);
  r.detail = buf;
  const double worst = std::max(-worst_margin / 1e-4, worst_rate / 1e-3);
  return finish(r, worst, tol);
}

CheckResult check_lsq_flow_bound(double tol) {
  CheckResult r;
  Rng rng(9);
  double worst = 0.0;
  while (r.instances < 10) {
    const std::size_t d = pick(rng, 2, 4);
    const ModelSpec spec = ModelSpec::least_squares(d);
    const ParameterVector theta = random_theta(spec, rng);
    const Batch batch = random_batch(spec, pick(rng, 1, d + 1), rng);
    const LinearBoundReport rep = strong_convex_bound_check(spec, theta, batch, {10.0, 1e-3, 1e12});
    if (!rep.completed()) {
      ++r.skipped;
      continue;
    }
    worst = std::max(worst, -rep.min_margin);
    ++r.instances;
  }
  r.detail = "max over t, n of l_n(t) - e^{-2t} l_n(0)";
  return finish(r, worst, tol);
}

CheckResult check_iekfac(double tol) {
  CheckResult r;
  Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const ModelSpec spec = ModelSpec::mlp(pick(rng, 2, 4), {pick(rng, 2, 5)}, pick(rng, 2, 4));
    const ParameterVector theta = random_theta(spec, rng);
    const Batch batch = random_batch(spec, 1, rng);
    const BatchLinearization lin = batch_linearize(spec, theta, batch);
    const DenseMatrix ef = build_ef(lin).matrix, ief = build_ief(lin).matrix;
    const auto layout = parameter_layout(spec);
    for (std::size_t l = 0; l < layout.size(); ++l) {
      const LayerStatistics st = layer_statistics(spec, theta, batch, l);
      const std::size_t size = layout[l].rows * layout[l].cols;
      const DenseMatrix e = build_kfac_factors(st.inputs, st.output_grads, lin.sief, KfacVariant::kEkfac, l).block();
      const DenseMatrix ie = build_kfac_factors(st.inputs, st.output_grads, lin.sief, KfacVariant::kIekfac, l).block();
      const DenseMatrix ef_block = sub_block(ef, layout[l].offset, size);
      const DenseMatrix ief_block = sub_block(ief, layout[l].offset, size);
      worst = std::max(worst, max_abs_diff(e, ef_block) / std::max(1.0, max_abs(ef_block)));
      worst = std::max(worst, max_abs_diff(ie, ief_block) / std::max(1.0, max_abs(ief_block)));
    }
    ++r.instances;
  }
  r.detail = "kron(G, A) vs exact layer block, N = 1, ef and ief";
  return finish(r, worst, tol);
}

CheckResult check_woodfisher(double tol) {
  CheckResult r;
  Rng rng(13);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    std::size_t skipped = 0;
    Instance inst = full_rank_instance(rng, 1e12, skipped);
    const double inv_n = 1.0 / static_cast<double>(inst.lin.batch_size());
    std::vector<std::size_t> order(inst.lin.batch_size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (auto variant : {WoodFisherVariant::kEf, WoodFisherVariant::kIef}) {
      const DenseMatrix batch_build =
          inv_n * (variant == WoodFisherVariant::kEf ? build_ef(inst.lin) : build_ief(inst.lin)).matrix;
      const DenseMatrix in_order = woodfisher_recursion(inst.lin, variant).matrix;
      const DenseMatrix shuffled = woodfisher_recursion(inst.lin, variant, order).matrix;
      const double scale = std::max(1.0, max_abs(batch_build));
      worst = std::max({worst, max_abs_diff(in_order, batch_build) / scale, max_abs_diff(shuffled, in_order) / scale});
    }
    ++r.instances;
  }
  r.detail = "recursion vs (1/N) batch build, and under a random sample order";
  return finish(r, worst, tol);
}

bool corrupted(const SelfTestCheck& c) {
  const char* env = std::getenv("NATGRAD_SELFTEST_CORRUPT");
  return env != nullptr && (c.id == env || c.name == env);
}

}  // namespace

const std::vector<SelfTestCheck>& selftest_checks() {
  static const std::vector<SelfTestCheck> checks = {
      {"", "gradient-check", "per-sample gradients match central differences", check_gradients, 1e-6},
      {"A1", "ef-reduction-law", "EF update reduces every sample's loss equally", check_ef_law, 1e-4},
      {"A2", "ief-reduction-law", "iEF update reduces sample n's loss by s_n", check_ief_law, 1e-4},
      {"A3", "lsq-equivalence", "iEF equals exact NGD for least squares", check_lsq_equivalence, 1e-8},
      {"A4", "fisher-ggn", "Fisher-vector products match the explicit Fisher", check_fisher_ggn, 1e-8},
      {"A5", "woodbury-smw", "low-rank solves match dense solves", check_low_rank_solves, 1e-8},
      {"A6", "ief-matrix", "iEF matrix solve matches the iEF update", check_ief_matrix, 1e-4},
      {"A7", "gamma-cg", "exact NGD minimises γ; CG γ trace is monotone", check_gamma_and_cg, 1.0},
      {"A8", "ief-flow-bound", "sub-linear bound on target probability along the iEF flow", check_ief_flow_bound, 1.0},
      {"A9", "lsq-flow-bound", "e^{-2t} loss decay along the least-squares iEF flow", check_lsq_flow_bound, 1e-6},
      {"A12", "iekfac-exact", "Kronecker factors are exact for one sample", check_iekfac, 1e-10},
      {"A13", "woodfisher", "rank-1 recursions equal batch builds", check_woodfisher, 1e-10},
  };
  return checks;
}

CheckResult run_check(const std::string& id_or_name) {
  for (const auto& c : selftest_checks()) {
    if (c.id != id_or_name && c.name != id_or_name) continue;
    const double tol = corrupted(c) ? -1.0 : c.tolerance;
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = c.run(tol);
    } catch (const Error& e) {
      r.passed = false;
      r.worst = std::numeric_limits<double>::quiet_NaN();
      r.tolerance = tol;
      r.detail = e.what();
    }
    r.id = c.id;
    r.name = c.name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown self-test check '" + id_or_name + "'");
}

void print_check_row(std::ostream& os, const CheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-4s %-18s worst=%-10.3g tol=%-8.2g n=%-3zu skipped=%-3zu %6.2fs  ",
                r.passed ? "PASS" : "FAIL", r.id.empty() ? "-" : r.id.c_str(), r.name.c_str(), r.worst, r.tolerance,
                r.instances, r.skipped, r.seconds);
  os << buf << r.detail << '\n';
}

std::vector<CheckResult> run_selftest(std::ostream* table) {
  std::vector<CheckResult> results;
  for (const auto& c : selftest_checks()) {
    results.push_back(run_check(c.name));
    if (table) {
      print_check_row(*table, results.back());
      table->flush();
    }
  }
  return results;
}

}  // namespace natgrad

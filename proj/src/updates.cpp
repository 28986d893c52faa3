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

#include "natgrad/updates.hpp"

#include <cmath>
#include <limits>

#include "natgrad/curvature.hpp"
#include "natgrad/error.hpp"
#include "natgrad/evaluation.hpp"

namespace natgrad {

std::string_view to_string(UpdateMethod method) {
  switch (method) {
    case UpdateMethod::kSgd: return "sgd";
    case UpdateMethod::kEf: return "ef";
    case UpdateMethod::kIef: return "ief";
    case UpdateMethod::kSf: return "sf";
    case UpdateMethod::kNgdExact: return "ngd-exact";
    case UpdateMethod::kNgdCg: return "ngd-cg";
  }
  return "unknown";
}

UpdateMethod parse_update_method(std::string_view text) {
  for (auto m : {UpdateMethod::kSgd, UpdateMethod::kEf, UpdateMethod::kIef, UpdateMethod::kSf,
                 UpdateMethod::kNgdExact, UpdateMethod::kNgdCg})
    if (to_string(m) == text) return m;
  throw Error(ErrorCode::kInvalidArgument, "unknown update method '" + std::string(text) + "'");
}

double trace_scale(const BatchLinearization& lin) {
  const std::size_t n = lin.batch_size();
  if (n == 0) return 0.0;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = norm2(lin.jacobian.row(i));
    t += r * r;
  }
  return t / static_cast<double>(n);
}

double Damping::resolve(const BatchLinearization& lin) const {
  if (!relative) return value;
  const double scale = trace_scale(lin);
  return value * (scale > 0.0 ? scale : 1.0);
}

namespace {

void require_positive(double lambda, const char* who) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidArgument, std::string(who) + " needs damping > 0");
}

struct ReducedSystem {
  DenseMatrix jacobian;
  DenseVector rhs;
  std::size_t dropped = 0;
};

// Removes rows whose per-sample gradient vanishes; those samples have
// converged and their Gram rows would make the system singular.
ReducedSystem drop_degenerate_rows(const BatchLinearization& lin, std::span<const double> rhs) {
  const std::size_t n = lin.batch_size();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (norm2(lin.jacobian.row(i)) >= kZeroGradientNorm) keep.push_back(i);
  ReducedSystem out;
  out.dropped = n - keep.size();
  if (out.dropped == 0) {
    out.jacobian = lin.jacobian;
    out.rhs = DenseVector(rhs);
    return out;
  }
  out.jacobian = DenseMatrix(keep.size(), lin.num_parameters());
  out.rhs = DenseVector(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto src = lin.jacobian.row(keep[k]);
    std::copy(src.begin(), src.end(), out.jacobian.row(k).begin());
    out.rhs[k] = rhs[keep[k]];
  }
  return out;
}

UpdateVector sample_space_update(const BatchLinearization& lin, std::span<const double> rhs, double lambda,
                                 UpdateMethod method) {
  const ReducedSystem sys = drop_degenerate_rows(lin, rhs);
  UpdateVector u;
  u.method = method;
  u.damping = lambda;
  u.dropped_rows = sys.dropped;
  u.direction = sys.jacobian.rows() == 0 ? DenseVector(lin.num_parameters())
                                         : woodbury_solve(sys.jacobian, sys.rhs, lambda);
  return u;
}

}  // namespace

UpdateVector sgd_update(const BatchLinearization& lin) {
  return {lin.total_grad, UpdateMethod::kSgd, 0.0, 0};
}

UpdateVector ef_update(const BatchLinearization& lin, double lambda) {
  require_positive(lambda, "ef_update");
  const DenseVector ones(lin.batch_size(), 1.0);
  return sample_space_update(lin, ones, lambda, UpdateMethod::kEf);
}

UpdateVector ief_update(const BatchLinearization& lin, double lambda) {
  require_positive(lambda, "ief_update");
  return sample_space_update(lin, lin.sief, lambda, UpdateMethod::kIef);
}

UpdateVector sf_update(const BatchLinearization& lin, const DenseMatrix& sampled_jacobian, double lambda) {
  require_positive(lambda, "sf_update");
  if (sampled_jacobian.cols() != lin.num_parameters())
    throw Error(ErrorCode::kShapeMismatch, "sampled Jacobian width");
  return {smw_solve(sampled_jacobian, lin.total_grad, lambda), UpdateMethod::kSf, lambda, 0};
}

UpdateVector ngd_exact_update(const DenseMatrix& fisher, std::span<const double> grad, double lambda) {
  if (fisher.rows() > kMaxExplicitParameters)
    throw Error(ErrorCode::kTooLarge, "explicit Fisher beyond " + std::to_string(kMaxExplicitParameters));
  const SpdSolution sol = solve_spd_detailed(fisher, grad, lambda);
  return {sol.x, UpdateMethod::kNgdExact, sol.ridge, 0};
}

CgResult ngd_cg_update(const FisherOperator& fvp, std::span<const double> grad, std::size_t cg_iters,
                       double lambda) {
  if (cg_iters < 1) throw Error(ErrorCode::kInvalidArgument, "cg_iters must be >= 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "damping must be >= 0");
  constexpr double kBreakdown = 1e-300;
  const std::size_t p = grad.size();

  CgResult out;
  out.update.method = UpdateMethod::kNgdCg;
  out.update.damping = lambda;
  DenseVector x(p);
  DenseVector r(grad);
  DenseVector v = r;
  double rr = dot(r, r);
  for (std::size_t m = 0; m < cg_iters; ++m) {
    if (rr <= kBreakdown) {
      out.breakdown = true;
      break;
    }
    DenseVector av = fvp(v);
    if (lambda > 0.0) axpy(lambda, v, av);
    const double vav = dot(v, av);
    if (vav <= kBreakdown) {
      out.breakdown = true;
      break;
    }
    const double alpha = rr / vav;
    axpy(alpha, v, x);
    axpy(-alpha, av, r);
    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < p; ++i) v[i] = r[i] + beta * v[i];
    rr = rr_next;
    ++out.iterations;
    out.gamma_trace.push_back(gamma(fvp, grad, x));
  }
  out.update.direction = std::move(x);
  return out;
}

ProjectionProfile projection_profile(const BatchLinearization& lin, std::span<const double> dtheta) {
  if (dtheta.size() != lin.num_parameters()) throw Error(ErrorCode::kShapeMismatch, "projection length");
  const std::size_t n = lin.batch_size();
  ProjectionProfile out{DenseVector(n), std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = lin.jacobian.row(i);
    const double norm = norm2(row);
    if (norm < kZeroGradientNorm) {
      out.flagged[i] = true;
      out.kappa[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.kappa[i] = dot(dtheta, row) / norm;
  }
  return out;
}

UpdateVector generate_update(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch,
                             const BatchLinearization& lin, const UpdateRequest& request) {
  switch (request.method) {
    case UpdateMethod::kSgd:
      return sgd_update(lin);
    case UpdateMethod::kEf:
      return ef_update(lin, request.damping.resolve(lin));
    case UpdateMethod::kIef:
      return ief_update(lin, request.damping.resolve(lin));
    case UpdateMethod::kSf: {
      const PseudoGradients pseudo = sample_pseudo_gradients(spec, theta, batch, request.seed);
      return sf_update(lin, pseudo.jacobian, request.damping.resolve(lin));
    }
    case UpdateMethod::kNgdExact: {
      const CurvatureMatrix f = build_fisher(spec, theta, batch);
      return ngd_exact_update(f.matrix, lin.total_grad, request.damping.resolve(lin));
    }
    case UpdateMethod::kNgdCg: {
      const std::size_t iters = request.cg_iters > 0 ? request.cg_iters : theta.size();
      return ngd_cg_update(make_fisher_operator(spec, theta, batch), lin.total_grad, iters,
                           request.damping.resolve(lin))
          .update;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unhandled update method");
}

}  // namespace natgrad

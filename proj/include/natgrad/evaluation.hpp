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

// Approximation quality of candidate updates to the exact natural gradient.
//
//   γ(Δθ) = √(Δθᵀ F Δθ) / |Δθᵀ g|
//
// γ is invariant to rescaling Δθ and is minimised by Δθ ∝ F⁻¹g, where
// γ² = 1 / (gᵀF⁻¹g). Only Fisher-vector products are needed.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "natgrad/models.hpp"
#include "natgrad/updates.hpp"

namespace natgrad {

/// Throws OrthogonalUpdate when |Δθᵀg| ≤ 1e-30.
double gamma(const FisherOperator& fvp, std::span<const double> grad, std::span<const double> dtheta);

FisherOperator make_fisher_operator(const ModelSpec& spec, const ParameterVector& theta, const Batch& batch);
FisherOperator make_fisher_operator(const DenseMatrix& fisher);

/// max_n ‖∇θl_n‖ / min_n ‖∇θl_n‖ over rows with a non-vanishing gradient.
double grad_norm_imbalance(const BatchLinearization& lin);

/// Maximum loss reduction along a direction predicted by the local quadratic
/// model: 1 / (2γ²).
double lqa_predicted_reduction(double gamma_value);

struct IndicatorReport {
  std::string checkpoint;
  UpdateMethod method = UpdateMethod::kSgd;
  std::size_t batch_idx = 0;
  double lambda = 0.0;
  std::optional<double> gamma;
  std::optional<double> gamma_ratio_sgd;
  double imbalance = 0.0;
  std::string status = "ok";

  bool ok() const { return gamma.has_value(); }
};

struct MethodSummary {
  UpdateMethod method = UpdateMethod::kSgd;
  std::size_t request_index = 0;
  double mean_gamma = 0.0;
  double std_gamma = 0.0;
  double mean_ratio = 0.0;  // mean of per-batch γ/γ_sgd
  double std_ratio = 0.0;
  std::size_t ok_count = 0;
  std::size_t failed_count = 0;
};

struct EvaluationResult {
  std::vector<IndicatorReport> reports;  // batch-major, then request order
  std::vector<MethodSummary> summary;    // one per request
  double mean_imbalance = 0.0;
};

/// Runs every request on every batch and computes γ and γ/γ_sgd. The request
/// list must contain sgd. Failures are recorded per cell.
EvaluationResult evaluate_methods(const ModelSpec& spec, const ParameterVector& theta,
                                  std::span<const Batch> batches, std::span<const UpdateRequest> requests,
                                  const std::string& checkpoint = "");

struct SweepGrid {
  std::vector<double> lambdas;  // strictly positive, ascending
  bool relative = true;         // multiply by the per-batch trace scale

  static SweepGrid log_spaced(double lo, double hi, std::size_t points, bool relative = true);
  void validate() const;
};

struct SweepRow {
  std::string checkpoint;
  UpdateMethod method = UpdateMethod::kIef;
  double lambda = 0.0;
  double mean_ratio = 0.0;
  double std_ratio = 0.0;
  std::size_t ok_count = 0;
  std::size_t failed_count = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<IndicatorReport> reports;
};

/// γ/γ_sgd of each method at each damping in the grid.
SweepResult damping_sweep(const ModelSpec& spec, const ParameterVector& theta, std::span<const Batch> batches,
                          const SweepGrid& grid, std::span<const UpdateMethod> methods,
                          const std::string& checkpoint = "", std::uint64_t seed = 0);

// CSV: checkpoint,method,lambda,batch_idx,gamma,gamma_ratio_sgd,imbalance,status
void write_indicator_csv_header(std::ostream& os);
void write_indicator_csv_rows(std::ostream& os, std::span<const IndicatorReport> reports);
// CSV: checkpoint,method,lambda,mean_ratio,std_ratio,ok,failed
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows, bool header = true);

/// Per-checkpoint panel values: batch means (and sample stds) of
/// γ_ef/γ_sgd, γ_ief/γ_sgd, γ_sf/γ_ef and the gradient-norm imbalance. A ratio
/// is NaN when a method is missing or failed on every batch.
struct StageRatios {
  std::string checkpoint;
  double ef_over_sgd = 0.0, ef_over_sgd_std = 0.0;
  double ief_over_sgd = 0.0, ief_over_sgd_std = 0.0;
  double sf_over_ef = 0.0, sf_over_ef_std = 0.0;
  double imbalance = 0.0, imbalance_std = 0.0;
};
StageRatios stage_ratios(const EvaluationResult& result, const std::string& checkpoint);

// CSV: checkpoint,ef_over_sgd,ef_over_sgd_std,ief_over_sgd,ief_over_sgd_std,
//      sf_over_ef,sf_over_ef_std,imbalance,imbalance_std
void write_stage_csv(std::ostream& os, std::span<const StageRatios> rows);

double mean(std::span<const double> xs);
double stddev(std::span<const double> xs);

}  // namespace natgrad

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "score/gva.hpp"
#include "score/types.hpp"

namespace score {

struct SupFitConfig {
  int outer_max_iters = 500;
  double outer_tol = 1e-6;
  GvaFitConfig gva;
  ConstraintSpec constraints;
  // The estimator is deterministic; the seed is carried into reports only.
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct FitReport {
  ModelParams theta;
  std::vector<double> objective_trace;
  bool converged = false;
  std::size_t clamp_count = 0;
  std::chrono::duration<double> wall_time{};
  int iterations = 0;
  // Err(theta_t) per iteration, filled when the generating parameters are known.
  std::vector<double> err_trace;
  std::vector<std::string> warnings;
  bool ridge_fallback = false;
};

struct SupervisedInit {
  ModelParams theta0;
  std::vector<GvaState> zeta0;  // one per subject, at its observed label
  bool ridge_fallback = false;
};

// Least-squares start: B from regressing (q/p) V' log(1 + X_i) on Ubar_{Y,i},
// Lambda from the residual covariance (eigenvalues floored at 1e-3), b from
// a logistic regression of Y on Ubar, and m_i the latent residual.
SupervisedInit init_supervised(const Dataset& data, const EmbeddingBasis& V);

// Same rule with soft labels in [0, 1] standing in for Y; the state of
// subject i is built at label round(soft_labels[i]).
SupervisedInit init_from_soft_labels(const Dataset& data, const EmbeddingBasis& V,
                                     const std::vector<double>& soft_labels);

struct SupervisedFit {
  FitReport report;
  std::vector<GvaState> states;  // final variational states, subject order
};

// Restricted maximum-ELBO estimator from labeled subjects only. Every
// subject of `data` must carry a label.
SupervisedFit fit_supervised_states(const Dataset& data, const EmbeddingBasis& V,
                                    const SupFitConfig& cfg, const ModelParams* truth = nullptr);

FitReport fit_supervised(const Dataset& data, const EmbeddingBasis& V, const SupFitConfig& cfg,
                         const ModelParams* truth = nullptr);

// Throws DegenerateLabels / InsufficientData when the labeled part cannot
// support a fit.
void check_label_support(const Dataset& data);

}  // namespace score

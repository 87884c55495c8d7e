#pragma once

#include <vector>

#include "score/types.hpp"

namespace score {

// Err(theta) = max{ max_k ||(B - B0)_{:,k}||_2,
//                   ||B_{Y,0}' Lambda0^{-1} (Lambda - Lambda0)||_2,
//                   ||b - b0||_2 }
double err_theta(const ModelParams& theta, const ModelParams& theta0);

// ||A - A0||_F / ||A0||_F
double rel_fnorm(const Matrix& A, const Matrix& A0);

// Mean over rows of the cosine between E_hat_i and xi_bar_i.
double cosine_embeddings(const Matrix& E_hat, const Matrix& xi_bar);

struct ClassificationMetrics {
  double auc = 0.0;
  double prauc = 0.0;
  double brier = 0.0;
};

// Brier score only; defined for any labels.
double brier_score(const std::vector<double>& scores, const std::vector<int>& labels);
// Mann-Whitney statistic with half credit for ties.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);
// Area under the step-interpolated precision-recall curve, one step per
// distinct threshold: sum_k (R_k - R_{k-1}) P_k.
double prauc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Throws DegenerateLabels when only one class is present.
ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<int>& labels);

}  // namespace score

#pragma once

#include <vector>

#include "score/gva.hpp"
#include "score/types.hpp"

namespace score {

struct PredictConfig {
  GvaFitConfig gva;
  ConstraintSpec constraints;
  double gamma_floor = 1e-12;
  int threads = 1;

  void validate() const;
};

struct EmbeddingEstimate {
  Vector E;   // (1 - gamma) E0 + gamma E1
  Vector E0;  // B Ubar_0 + m^(0)
  Vector E1;  // B Ubar_1 + m^(1)
  double gamma = 0.5;
};

// Both label-hypothesis fits of one subject; gamma and the embedding are
// derived from the same pair.
struct SubjectPrediction {
  double Q0 = 0.0, Q1 = 0.0;
  EmbeddingEstimate embedding;
  std::size_t clamped = 0;
};

SubjectPrediction predict_subject(const Vector& x, const Vector& u, const ModelParams& theta,
                                  const EmbeddingBasis& V, const PredictConfig& cfg);

// expit(Q1 - Q0), clamped to [gamma_floor, 1 - gamma_floor].
double predict_proba(const Vector& x, const Vector& u, const ModelParams& theta,
                     const EmbeddingBasis& V, const PredictConfig& cfg);

EmbeddingEstimate embed(const Vector& x, const Vector& u, const ModelParams& theta,
                        const EmbeddingBasis& V, const PredictConfig& cfg);

// Every subject of `data`, in row order; labels are ignored.
std::vector<SubjectPrediction> predict_batch(const Dataset& data, const ModelParams& theta,
                                             const EmbeddingBasis& V, const PredictConfig& cfg);

// Pr(Y = 1 | xi_bar, U) under theta:
// expit(b'Ubar + B_Y' Lambda^{-1} (xi_bar - B Ubar_0) - B_Y' Lambda^{-1} B_Y / 2).
double oracle_label_posterior(const ModelParams& theta, const Vector& xi_bar, const Vector& u);

}  // namespace score

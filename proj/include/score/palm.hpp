#pragma once

#include <cstddef>

#include "score/types.hpp"

namespace score {

// Rescales an arbitrary p x q embedding matrix onto the normalized basis
// sqrt(p/q) * U W', where raw = U Sigma W' is the thin SVD. This is the
// normalized matrix closest to raw, so an already-normalized input comes
// back unchanged and the column span is preserved.
EmbeddingBasis orthonormalize_basis(const Matrix& raw);

// theta-dependent quantities shared by every subject evaluated at theta.
class PreparedModel {
 public:
  PreparedModel(const ModelParams& theta, const EmbeddingBasis& basis, double eta_clip);

  const ModelParams& theta() const { return theta_; }
  const EmbeddingBasis& basis() const { return *basis_; }
  const Matrix& lambda_inv() const { return lambda_inv_; }
  const Vector& lambda_inv_diag() const { return lambda_inv_diag_; }
  double log_det_lambda() const { return log_det_; }
  // V * B, p x (r+2)
  const Matrix& VB() const { return VB_; }
  double eta_clip() const { return eta_clip_; }

 private:
  ModelParams theta_;
  const EmbeddingBasis* basis_;
  Matrix lambda_inv_;
  Vector lambda_inv_diag_;
  double log_det_ = 0.0;
  Matrix VB_;
  double eta_clip_;
};

// Label-independent per-subject constants.
struct SubjectTerms {
  Vector x;               // counts as doubles
  Vector Vtx;             // V' x
  Vector Vt_log1p;        // V' log(1 + x)
  double log_factorial;   // sum_j log(x_j!)
};

SubjectTerms make_subject_terms(const Vector& x, const EmbeddingBasis& basis);

// log expit(t) for y = 1 and log(1 - expit(t)) for y = 0.
double bernoulli_loglik(double t, double y);

// Evaluates the explicit ELBO of one (subject, hypothesized label) pair as a
// function of the variational parameters (m, s) at fixed theta.
class ElboKernel {
 public:
  ElboKernel(const PreparedModel& model, const SubjectTerms& subject, const Vector& u, int y);

  // Returns J(m, s); fills A_j = exp(min(eta_j, eta_clip)) and counts clamps.
  double value(const Vector& m, const Vector& s, Vector& A, std::size_t& clamped) const;

  const Vector& offset() const { return offset_; }  // V B Ubar_y
  const Vector& ubar_y() const { return ubar_y_; }
  const PreparedModel& model() const { return *model_; }
  const SubjectTerms& subject() const { return *subject_; }
  int label() const { return y_; }

 private:
  const PreparedModel* model_;
  const SubjectTerms* subject_;
  Vector ubar_y_;
  Vector offset_;
  double constant_;
  int y_;
};

struct ElboValue {
  double value;
  std::size_t clamped;
};

// The ten-term ELBO including -sum log(x_j!) and +q/2.
ElboValue elbo(const ModelParams& theta, const GvaState& zeta, const Vector& x, const Vector& u,
               int y, const EmbeddingBasis& V, const ConstraintSpec& constraints = {});

struct ElboGradients {
  Vector grad_m;      // V'(x - A) - Lambda^{-1} m
  Vector grad_log_s;  // with respect to rho = log s
  Matrix grad_B;      // V'(x - A) Ubar_y'
  Vector grad_b;      // (y - expit(b'Ubar)) Ubar
  std::size_t clamped;
};

ElboGradients elbo_gradients(const ModelParams& theta, const GvaState& zeta, const Vector& x,
                             const Vector& u, int y, const EmbeddingBasis& V,
                             const ConstraintSpec& constraints = {});

// log P(X = x, Y = y | U = u; theta) by adaptive tensor Gauss-Hermite
// quadrature over W, centred at the posterior mode. Oracle for q <= 3.
double loglik_quadrature(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                         const EmbeddingBasis& V, int nodes);

// B_Y' Lambda^{-1} B_Y
double snr(const ModelParams& theta);

}  // namespace score

#pragma once

// Shared machinery for the supervised, hybrid EM and prediction paths. A
// "branch" is one (subject, hypothesized label) pair carrying a weight in the
// objective and its own variational state: labeled subjects contribute one
// branch of weight 1, unlabeled subjects two branches weighted by gamma and
// 1 - gamma.

#include <cstddef>
#include <vector>

#include "score/gva.hpp"
#include "score/palm.hpp"
#include "score/types.hpp"

namespace score::detail {

struct Branch {
  std::size_t subject = 0;
  int y = 0;
  double weight = 1.0;
  GvaState state;
  double elbo = 0.0;
  std::size_t clamped = 0;
  bool converged = true;
};

struct RefitStats {
  std::size_t clamped = 0;
  std::size_t not_converged = 0;
};

class BranchFit {
 public:
  BranchFit(const Dataset& data, const EmbeddingBasis& V, const ConstraintSpec& constraints,
            const GvaFitConfig& gva, int threads);

  const Dataset& data() const { return *data_; }
  const EmbeddingBasis& basis() const { return *V_; }
  const SubjectTerms& terms(std::size_t subject) const { return terms_[subject]; }
  const Vector& covariates(std::size_t subject) const { return u_[subject]; }

  std::vector<Branch>& branches() { return branches_; }
  const std::vector<Branch>& branches() const { return branches_; }
  void add_branch(std::size_t subject, int y, double weight, GvaState state);
  // Starting state from the initialization rule at theta.
  GvaState cold_state(const ModelParams& theta, std::size_t subject, int y) const;

  // Refits branches [first, last) at theta. Cold refits restart from the
  // initialization rule; warm refits continue from the stored state.
  RefitStats refit(const ModelParams& theta, bool cold, std::size_t first, std::size_t last);
  RefitStats refit(const ModelParams& theta, bool cold = false) {
    return refit(theta, cold, 0, branches_.size());
  }
  // Recomputes each branch's ELBO at theta without moving the states.
  void evaluate(const ModelParams& theta);
  // sum_k w_k J_k in branch order.
  double objective() const;

  // One block-coordinate ascent step on theta at fixed Poisson terms:
  // B by weighted least squares of mu_k = B Ubar_k + m_k on Ubar_k (the m_k
  // follow so mu_k is unchanged), projected onto Omega_B; Lambda in closed
  // form; b by Newton on the weighted logistic likelihood. Moves branch
  // means. Returns the updated parameters.
  ModelParams update_theta(const ModelParams& theta);

  // Gradients of objective() in B and b at the current states.
  Matrix gradient_B(const ModelParams& theta) const;
  Vector gradient_b(const ModelParams& theta) const;

  double total_weight() const;
  // sum_k w_k (m_k m_k' + diag s_k) / sum_k w_k
  Matrix lambda_closed_form() const;

 private:
  Vector logistic_update(const Vector& b0) const;
  double max_linear_predictor(const Matrix& B) const;

  const Dataset* data_;
  const EmbeddingBasis* V_;
  ConstraintSpec constraints_;
  GvaFitConfig gva_;
  int threads_;
  std::vector<SubjectTerms> terms_;
  std::vector<Vector> u_;
  std::vector<Branch> branches_;
};

// max_{k,j} |V_j' m_k| <= bound for every branch.
bool means_feasible(const BranchFit& fit, double bound);

// Weighted logistic regression by damped Newton: maximizes
// sum_i [t_i log expit(b'z_i) + (w_i - t_i) log(1 - expit(b'z_i))].
Vector weighted_logistic(const Matrix& Z, const Vector& targets, const Vector& weights,
                         Vector b, int max_iters = 100);

}  // namespace score::detail

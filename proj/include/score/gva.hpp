#pragma once

#include <cstddef>
#include <vector>

#include "score/palm.hpp"
#include "score/types.hpp"

namespace score {

struct GvaFitConfig {
  int max_iters = 200;
  // Stop when |dJ| < tol * max(1, |J|).
  double tol = 1e-8;
  // Initial step along the Newton-scaled ascent direction.
  double step_init = 1.0;
  double backtrack_factor = 0.5;
  bool record_trace = false;

  void validate() const;
};

struct GvaFit {
  GvaState zeta;
  double Q = 0.0;
  int iters = 0;
  bool converged = false;
  std::size_t clamped = 0;     // clamps at the returned state
  std::vector<double> trace;   // ELBO at the start and after each accepted step
};

// Rescales m by bound / max_j |V_j'm| when the bound is exceeded.
// Returns true if m was changed.
bool project_mean(Vector& m, const EmbeddingBasis& V, double bound);

// Log-link linearization: m = (q/p) V' log(1 + x) - B Ubar_y, s = 0.1.
GvaState initial_state(const ElboKernel& kernel, double mean_bound);

// Projected ascent over (m, log s) for a single kernel. The m direction is
// the Newton step of the m-block, the log s direction is scaled by the
// diagonal curvature; Armijo backtracking keeps every accepted step
// non-decreasing. Holds scratch buffers, so use one solver per thread.
class GvaSolver {
 public:
  GvaFit fit(const ElboKernel& kernel, GvaState start, double mean_bound,
             const GvaFitConfig& cfg);

 private:
  Vector A_, A_trial_, resid_, sqrtA_, g_m_, g_rho_, d_m_, d_rho_, h_rho_, curv_;
  Vector m_trial_, rho_, rho_trial_, s_trial_;
  Matrix W_, H_;
};

// Maximizes the ELBO over one subject's variational state at fixed theta.
// A warm start, when given, replaces the initialization rule.
GvaFit fit_gva_subject(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                       const EmbeddingBasis& V, const ConstraintSpec& constraints,
                       const GvaFitConfig& cfg, const GvaState* warm_start = nullptr);

// Q^(y)(x, u, theta): the profiled ELBO.
double profile_q(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                 const EmbeddingBasis& V, const ConstraintSpec& constraints,
                 const GvaFitConfig& cfg);

}  // namespace score

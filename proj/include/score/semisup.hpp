#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "score/supervised.hpp"
#include "score/types.hpp"

namespace score {

struct EmConfig {
  // EM iterations; 0 selects max(T_floor, ceil(c_T log(N/n))).
  int T = 0;
  double c_T = 5.0;
  int T_floor = 10;
  // Inner M-step: passes of [theta block, GVA refit] until the relative
  // change of O_F falls below m_step_tol or the cap is reached.
  int m_step_max_passes = 50;
  double m_step_tol = 1e-6;
  double gamma_floor = 1e-12;
  // Refit variational states from the previous iteration instead of the
  // initialization rule.
  bool warm_start = true;

  void validate() const;
  int resolve_T(std::size_t N, std::size_t n) const;
};

struct Responsibilities {
  std::vector<std::size_t> subjects;  // unlabeled subject indices, ascending
  Vector gamma;                       // same order
};

// gamma = expit(Q1 - Q0) clamped to [floor, 1 - floor].
double responsibility(double Q0, double Q1, double gamma_floor);

// One state per labeled subject, two per unlabeled subject (index = label).
struct StateSet {
  std::vector<std::size_t> labeled;
  std::vector<GvaState> labeled_states;
  std::vector<std::size_t> unlabeled;
  std::vector<std::array<GvaState, 2>> unlabeled_states;
};

// Fits both label hypotheses for every unlabeled subject from the
// initialization rule at theta.
Responsibilities e_step(const ModelParams& theta, const Dataset& data, const EmbeddingBasis& V,
                        const SupFitConfig& fit_cfg, const EmConfig& cfg);

// O_F = sum_L J^(Y_i) + sum_U [gamma_i J^(1) + (1 - gamma_i) J^(0)] at fixed states.
double full_objective(const ModelParams& theta, const Dataset& data, const EmbeddingBasis& V,
                      const StateSet& states, const Responsibilities& gamma,
                      const ConstraintSpec& constraints = {});

// Gradients of O_F in B and b at fixed states.
struct FullGradients {
  Matrix grad_B;
  Vector grad_b;
};
FullGradients full_objective_gradients(const ModelParams& theta, const Dataset& data,
                                       const EmbeddingBasis& V, const StateSet& states,
                                       const Responsibilities& gamma,
                                       const ConstraintSpec& constraints = {});

struct MStepResult {
  ModelParams theta;
  StateSet states;
  std::vector<double> objective_trace;  // O_F at entry and after every pass
  std::size_t clamped = 0;
};

// Block ascent on O_F at fixed responsibilities, starting from `states`.
MStepResult m_step(const ModelParams& theta_prev, const Dataset& data, const EmbeddingBasis& V,
                   const Responsibilities& gamma, StateSet states, const SupFitConfig& fit_cfg,
                   const EmConfig& cfg);

struct ScoreFit {
  ModelParams theta_hat;
  FitReport report;  // objective_trace holds O_F after each EM iteration
  Responsibilities responsibilities;  // final E-step at theta_hat
  StateSet states;
  ModelParams theta_init;
  // O_F at fixed gamma before and after each M-step.
  std::vector<double> of_before, of_after;
  // sum_L J + sum_U log(e^{J0} + e^{J1}), after each E-step; EM ascends it.
  std::vector<double> bound_trace;
  int T = 0;
  int plateau_iteration = 0;
};

// Hybrid EM initialized at the supervised fit on the labeled subset.
ScoreFit fit_score(const Dataset& data, const EmbeddingBasis& V, const EmConfig& cfg,
                   const SupFitConfig& sup_cfg, const ModelParams* truth = nullptr);

// Hybrid EM started from given parameters instead of the supervised fit;
// every variational state is initialized by the cold rule at theta_init.
ScoreFit fit_score_from(const Dataset& data, const EmbeddingBasis& V, const ModelParams& theta_init,
                        const EmConfig& cfg, const SupFitConfig& sup_cfg,
                        const ModelParams* truth = nullptr);

// The same EM with every subject treated as unlabeled, initialized by the
// least-squares rule at soft labels 0.5. Labels in `data` are ignored.
ScoreFit fit_unsupervised(const Dataset& data, const EmbeddingBasis& V, const EmConfig& cfg,
                          const SupFitConfig& sup_cfg, const ModelParams* truth = nullptr);

}  // namespace score

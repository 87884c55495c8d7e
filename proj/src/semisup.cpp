#include "score/semisup.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "branch_fit.hpp"
#include "score/metrics.hpp"

namespace score {

void EmConfig::validate() const {
  if (T < 0) throw Error(ErrorKind::Config, "T must be >= 1 (or 0 for the default rule)");
  if (!(c_T > 0.0) || T_floor < 1) throw Error(ErrorKind::Config, "need c_T > 0, T_floor >= 1");
  if (m_step_max_passes < 1) throw Error(ErrorKind::Config, "m_step_max_passes must be >= 1");
  if (!(m_step_tol > 0.0)) throw Error(ErrorKind::Config, "m_step_tol must be positive");
  if (!(gamma_floor >= 0.0 && gamma_floor < 0.5))
    throw Error(ErrorKind::Config, "gamma_floor must lie in [0, 0.5)");
}

int EmConfig::resolve_T(std::size_t N, std::size_t n) const {
  if (T > 0) return T;
  if (n == 0 || N <= n) return T_floor;
  const double rule = std::ceil(c_T * std::log(static_cast<double>(N) / static_cast<double>(n)));
  return std::max(T_floor, static_cast<int>(rule));
}

double responsibility(double Q0, double Q1, double gamma_floor) {
  const double g = expit(Q1 - Q0);
  return std::clamp(g, gamma_floor, 1.0 - gamma_floor);
}

namespace {

double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Branch layout: labeled subjects first, then (y = 0, y = 1) pairs per
// unlabeled subject.
struct Layout {
  std::size_t n_labeled = 0;
  std::vector<std::size_t> unlabeled;
  std::size_t branch(std::size_t j, int y) const { return n_labeled + 2 * j + y; }
};

void set_weights(detail::BranchFit& fit, const Layout& lay, const Vector& gamma) {
  auto& br = fit.branches();
  for (std::size_t j = 0; j < lay.unlabeled.size(); ++j) {
    br[lay.branch(j, 0)].weight = 1.0 - gamma(j);
    br[lay.branch(j, 1)].weight = gamma(j);
  }
}

Vector compute_gamma(const detail::BranchFit& fit, const Layout& lay, double floor) {
  const auto& br = fit.branches();
  Vector g(static_cast<Eigen::Index>(lay.unlabeled.size()));
  for (std::size_t j = 0; j < lay.unlabeled.size(); ++j)
    g(j) = responsibility(br[lay.branch(j, 0)].elbo, br[lay.branch(j, 1)].elbo, floor);
  return g;
}

double em_bound(const detail::BranchFit& fit, const Layout& lay) {
  const auto& br = fit.branches();
  double total = 0.0;
  for (std::size_t k = 0; k < lay.n_labeled; ++k) total += br[k].elbo;
  for (std::size_t j = 0; j < lay.unlabeled.size(); ++j)
    total += log_sum_exp(br[lay.branch(j, 0)].elbo, br[lay.branch(j, 1)].elbo);
  return total;
}

StateSet extract_states(const detail::BranchFit& fit, const Layout& lay) {
  StateSet st;
  const auto& br = fit.branches();
  for (std::size_t k = 0; k < lay.n_labeled; ++k) {
    st.labeled.push_back(br[k].subject);
    st.labeled_states.push_back(br[k].state);
  }
  st.unlabeled = lay.unlabeled;
  for (std::size_t j = 0; j < lay.unlabeled.size(); ++j)
    st.unlabeled_states.push_back({br[lay.branch(j, 0)].state, br[lay.branch(j, 1)].state});
  return st;
}

Layout load_states(detail::BranchFit& fit, const Dataset& data, const StateSet& states,
                   const Responsibilities& gamma) {
  if (states.labeled.size() != states.labeled_states.size() ||
      states.unlabeled.size() != states.unlabeled_states.size() ||
      gamma.subjects != states.unlabeled ||
      gamma.gamma.size() != static_cast<Eigen::Index>(states.unlabeled.size()))
    throw Error(ErrorKind::Dimension, "state set and responsibilities do not line up");
  Layout lay;
  lay.n_labeled = states.labeled.size();
  lay.unlabeled = states.unlabeled;
  for (std::size_t k = 0; k < states.labeled.size(); ++k) {
    const auto i = states.labeled[k];
    if (i >= data.labels.size() || !data.labels[i])
      throw Error(ErrorKind::Schema, "labeled state refers to an unlabeled subject");
    fit.add_branch(i, *data.labels[i], 1.0, states.labeled_states[k]);
  }
  for (std::size_t j = 0; j < states.unlabeled.size(); ++j) {
    fit.add_branch(states.unlabeled[j], 0, 1.0 - gamma.gamma(j), states.unlabeled_states[j][0]);
    fit.add_branch(states.unlabeled[j], 1, gamma.gamma(j), states.unlabeled_states[j][1]);
  }
  return lay;
}

struct PassResult {
  ModelParams theta;
  std::vector<double> trace;
  detail::RefitStats stats;
};

// Passes of [theta block, refit] at fixed weights until O_F settles.
PassResult run_m_step(detail::BranchFit& fit, ModelParams theta, const EmConfig& cfg,
                      std::vector<std::string>* warnings, int em_iteration) {
  PassResult out;
  double prev = fit.objective();
  out.trace.push_back(prev);
  for (int pass = 0; pass < cfg.m_step_max_passes; ++pass) {
    theta = fit.update_theta(theta);
    out.stats = fit.refit(theta, !cfg.warm_start);
    const double J = fit.objective();
    out.trace.push_back(J);
    if (warnings && J < prev - 1e-6 * std::max(1.0, std::abs(prev))) {
      std::ostringstream os;
      os << "O_F decreased inside M-step of EM iteration " << em_iteration << " (pass " << pass + 1
         << ") by " << prev - J;
      warnings->push_back(os.str());
    }
    const bool done = std::abs(J - prev) < cfg.m_step_tol * std::max(1.0, std::abs(prev));
    prev = J;
    if (done) break;
  }
  out.theta = std::move(theta);
  return out;
}

void run_em(detail::BranchFit& fit, const Layout& lay, ModelParams theta, const EmConfig& cfg,
            std::size_t n_for_T, const ModelParams* truth, ScoreFit& out) {
  FitReport& report = out.report;
  const auto N = static_cast<std::size_t>(fit.data().N());
  out.T = cfg.resolve_T(N, n_for_T);
  out.theta_init = theta;
  if (truth) report.err_trace.push_back(err_theta(theta, *truth));

  detail::RefitStats stats;
  for (int t = 1; t <= out.T; ++t) {
    // E-step from the profiled ELBOs at the current theta.
    const Vector gamma = compute_gamma(fit, lay, cfg.gamma_floor);
    set_weights(fit, lay, gamma);
    out.bound_trace.push_back(em_bound(fit, lay));
    const double before = fit.objective();
    out.of_before.push_back(before);

    PassResult ms = run_m_step(fit, std::move(theta), cfg, &report.warnings, t);
    theta = std::move(ms.theta);
    stats = ms.stats;
    const double after = fit.objective();
    out.of_after.push_back(after);
    report.objective_trace.push_back(after);
    report.iterations = t;
    if (truth) report.err_trace.push_back(err_theta(theta, *truth));
    if (after < before - 1e-6 * std::max(1.0, std::abs(before))) {
      std::ostringstream os;
      os << "O_F not monotone at EM iteration " << t << ": " << before << " -> " << after;
      report.warnings.push_back(os.str());
    }
  }

  // Final E-step so the reported responsibilities belong to theta_hat.
  const Vector gamma = compute_gamma(fit, lay, cfg.gamma_floor);
  set_weights(fit, lay, gamma);
  out.bound_trace.push_back(em_bound(fit, lay));
  out.responsibilities.subjects = lay.unlabeled;
  out.responsibilities.gamma = gamma;

  const auto& L = out.bound_trace;
  int plateau = out.T;
  for (int t = out.T; t >= 1; --t) {
    const double d = std::abs(L[t] - L[t - 1]);
    if (d > 1e-6 * std::max(1.0, std::abs(L[t]))) break;
    plateau = t - 1;
  }
  out.plateau_iteration = std::max(plateau, 1);
  report.converged = plateau < out.T;
  report.clamp_count = stats.clamped;
  if (stats.not_converged > 0) {
    std::ostringstream os;
    os << stats.not_converged << " subject GVA fits hit the iteration cap";
    report.warnings.push_back(os.str());
  }
  out.theta_hat = theta;
  report.theta = theta;
  out.states = extract_states(fit, lay);
}

}  // namespace

Responsibilities e_step(const ModelParams& theta, const Dataset& data, const EmbeddingBasis& V,
                        const SupFitConfig& fit_cfg, const EmConfig& cfg) {
  theta.validate();
  fit_cfg.validate();
  cfg.validate();
  detail::BranchFit fit(data, V, fit_cfg.constraints, fit_cfg.gva, fit_cfg.threads);
  Layout lay;
  lay.unlabeled = data.unlabeled_indices();
  if (lay.unlabeled.empty()) throw Error(ErrorKind::InsufficientData, "no unlabeled subjects");
  for (auto i : lay.unlabeled)
    for (int y = 0; y < 2; ++y) fit.add_branch(i, y, 0.5, GvaState{});
  try {
    fit.refit(theta, true);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("E-step: ") + e.what());
  }
  Responsibilities r;
  r.subjects = lay.unlabeled;
  r.gamma = compute_gamma(fit, lay, cfg.gamma_floor);
  return r;
}

double full_objective(const ModelParams& theta, const Dataset& data, const EmbeddingBasis& V,
                      const StateSet& states, const Responsibilities& gamma,
                      const ConstraintSpec& constraints) {
  detail::BranchFit fit(data, V, constraints, GvaFitConfig{}, 1);
  load_states(fit, data, states, gamma);
  fit.evaluate(theta);
  return fit.objective();
}

FullGradients full_objective_gradients(const ModelParams& theta, const Dataset& data,
                                       const EmbeddingBasis& V, const StateSet& states,
                                       const Responsibilities& gamma,
                                       const ConstraintSpec& constraints) {
  detail::BranchFit fit(data, V, constraints, GvaFitConfig{}, 1);
  load_states(fit, data, states, gamma);
  return FullGradients{fit.gradient_B(theta), fit.gradient_b(theta)};
}

MStepResult m_step(const ModelParams& theta_prev, const Dataset& data, const EmbeddingBasis& V,
                   const Responsibilities& gamma, StateSet states, const SupFitConfig& fit_cfg,
                   const EmConfig& cfg) {
  theta_prev.validate();
  fit_cfg.validate();
  cfg.validate();
  for (Eigen::Index j = 0; j < gamma.gamma.size(); ++j)
    if (!(gamma.gamma(j) >= 0.0 && gamma.gamma(j) <= 1.0))
      throw Error(ErrorKind::Config, "responsibilities must lie in [0, 1]");
  detail::BranchFit fit(data, V, fit_cfg.constraints, fit_cfg.gva, fit_cfg.threads);
  const Layout lay = load_states(fit, data, states, gamma);
  fit.evaluate(theta_prev);
  PassResult ms = run_m_step(fit, theta_prev, cfg, nullptr, 0);
  MStepResult out;
  out.theta = std::move(ms.theta);
  out.objective_trace = std::move(ms.trace);
  out.clamped = ms.stats.clamped;
  out.states = extract_states(fit, lay);
  return out;
}

ScoreFit fit_score(const Dataset& data, const EmbeddingBasis& V, const EmConfig& cfg,
                   const SupFitConfig& sup_cfg, const ModelParams* truth) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  sup_cfg.validate();
  data.validate();
  check_label_support(data);
  const auto lab = data.labeled_indices();
  Layout lay;
  lay.n_labeled = lab.size();
  lay.unlabeled = data.unlabeled_indices();
  if (lay.unlabeled.empty())
    throw Error(ErrorKind::InsufficientData, "semi-supervised fit needs unlabeled subjects");

  const Dataset labeled = data.subset(lab);
  SupervisedFit sup = fit_supervised_states(labeled, V, sup_cfg, truth);
  const ModelParams& theta_tilde = sup.report.theta;

  detail::BranchFit fit(data, V, sup_cfg.constraints, sup_cfg.gva, sup_cfg.threads);
  for (std::size_t k = 0; k < lab.size(); ++k)
    fit.add_branch(lab[k], *data.labels[lab[k]], 1.0, std::move(sup.states[k]));
  for (auto i : lay.unlabeled)
    for (int y = 0; y < 2; ++y) fit.add_branch(i, y, 0.5, GvaState{});
  fit.refit(theta_tilde, true, lay.n_labeled, fit.branches().size());
  // Labeled states were fitted at theta_tilde; refresh their stored ELBOs
  // on the same footing as the unlabeled branches.
  fit.evaluate(theta_tilde);

  ScoreFit out;
  out.report.ridge_fallback = sup.report.ridge_fallback;
  for (const auto& w : sup.report.warnings) out.report.warnings.push_back("supervised init: " + w);
  run_em(fit, lay, theta_tilde, cfg, lab.size(), truth, out);
  out.report.wall_time = std::chrono::steady_clock::now() - start;
  return out;
}

ScoreFit fit_score_from(const Dataset& data, const EmbeddingBasis& V, const ModelParams& theta_init,
                        const EmConfig& cfg, const SupFitConfig& sup_cfg, const ModelParams* truth) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  sup_cfg.validate();
  data.validate();
  theta_init.validate();
  if (theta_init.q() != V.q() || theta_init.r() != data.r() || data.p() != V.p())
    throw Error(ErrorKind::Dimension, "initial parameters do not match data/basis");
  check_label_support(data);
  const auto lab = data.labeled_indices();
  Layout lay;
  lay.n_labeled = lab.size();
  lay.unlabeled = data.unlabeled_indices();

  detail::BranchFit fit(data, V, sup_cfg.constraints, sup_cfg.gva, sup_cfg.threads);
  for (auto i : lab) fit.add_branch(i, *data.labels[i], 1.0, GvaState{});
  for (auto i : lay.unlabeled)
    for (int y = 0; y < 2; ++y) fit.add_branch(i, y, 0.5, GvaState{});
  fit.refit(theta_init, true);

  ScoreFit out;
  run_em(fit, lay, theta_init, cfg, lab.size(), truth, out);
  out.report.wall_time = std::chrono::steady_clock::now() - start;
  return out;
}

ScoreFit fit_unsupervised(const Dataset& data, const EmbeddingBasis& V, const EmConfig& cfg,
                          const SupFitConfig& sup_cfg, const ModelParams* truth) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  sup_cfg.validate();
  data.validate();
  // Strip labels so nothing downstream can see them.
  Dataset blind = data;
  std::fill(blind.labels.begin(), blind.labels.end(), std::nullopt);
  const auto N = static_cast<std::size_t>(blind.N());

  SupervisedInit init = init_from_soft_labels(blind, V, std::vector<double>(N, 0.5));
  Layout lay;
  lay.unlabeled = blind.unlabeled_indices();

  detail::BranchFit fit(blind, V, sup_cfg.constraints, sup_cfg.gva, sup_cfg.threads);
  for (auto i : lay.unlabeled)
    for (int y = 0; y < 2; ++y) fit.add_branch(i, y, 0.5, GvaState{});
  fit.refit(init.theta0, true);

  ScoreFit out;
  out.report.ridge_fallback = init.ridge_fallback;
  run_em(fit, lay, init.theta0, cfg, data.labeled_count(), truth, out);
  out.report.wall_time = std::chrono::steady_clock::now() - start;
  return out;
}

}  // namespace score

#include "branch_fit.hpp"

#include <algorithm>
#include <cmath>

#include "score/parallel.hpp"

namespace score::detail {

BranchFit::BranchFit(const Dataset& data, const EmbeddingBasis& V,
                     const ConstraintSpec& constraints, const GvaFitConfig& gva, int threads)
    : data_(&data), V_(&V), constraints_(constraints), gva_(gva), threads_(std::max(1, threads)) {
  const auto N = static_cast<std::size_t>(data.N());
  terms_.resize(N);
  u_.resize(N);
  parallel_for(N, threads_, [&](std::size_t i, int) {
    terms_[i] = make_subject_terms(data.counts(i), V);
    u_[i] = data.covariates(i);
  });
}

void BranchFit::add_branch(std::size_t subject, int y, double weight, GvaState state) {
  Branch b;
  b.subject = subject;
  b.y = y;
  b.weight = weight;
  b.state = std::move(state);
  b.state.label = y;
  branches_.push_back(std::move(b));
}

GvaState BranchFit::cold_state(const ModelParams& theta, std::size_t subject, int y) const {
  const PreparedModel model(theta, *V_, constraints_.eta_clip);
  const ElboKernel kernel(model, terms_[subject], u_[subject], y);
  return initial_state(kernel, constraints_.mean_bound(*V_));
}

RefitStats BranchFit::refit(const ModelParams& theta, bool cold, std::size_t first,
                            std::size_t last) {
  const PreparedModel model(theta, *V_, constraints_.eta_clip);
  const double bound = constraints_.mean_bound(*V_);
  std::vector<GvaSolver> solvers(static_cast<std::size_t>(threads_));
  parallel_for(last - first, threads_, [&](std::size_t k, int worker) {
    Branch& br = branches_[first + k];
    const ElboKernel kernel(model, terms_[br.subject], u_[br.subject], br.y);
    GvaState start = cold ? initial_state(kernel, bound) : br.state;
    GvaFit fit = solvers[static_cast<std::size_t>(worker)].fit(kernel, std::move(start), bound, gva_);
    br.state = std::move(fit.zeta);
    br.elbo = fit.Q;
    br.clamped = fit.clamped;
    br.converged = fit.converged;
  });
  RefitStats stats;
  for (std::size_t k = first; k < last; ++k) {
    stats.clamped += branches_[k].clamped;
    stats.not_converged += !branches_[k].converged;
  }
  return stats;
}

void BranchFit::evaluate(const ModelParams& theta) {
  const PreparedModel model(theta, *V_, constraints_.eta_clip);
  parallel_for(branches_.size(), threads_, [&](std::size_t k, int) {
    Branch& br = branches_[k];
    const ElboKernel kernel(model, terms_[br.subject], u_[br.subject], br.y);
    Vector A(V_->p());
    std::size_t clamped = 0;
    br.elbo = kernel.value(br.state.m, br.state.s, A, clamped);
    br.clamped = clamped;
  });
}

double BranchFit::objective() const {
  double total = 0.0;
  for (const auto& br : branches_) total += br.weight * br.elbo;
  return total;
}

double BranchFit::total_weight() const {
  double total = 0.0;
  for (const auto& br : branches_) total += br.weight;
  return total;
}

Matrix BranchFit::lambda_closed_form() const {
  const auto q = V_->q();
  Matrix S = Matrix::Zero(q, q);
  for (const auto& br : branches_) {
    S.noalias() += br.weight * br.state.m * br.state.m.transpose();
    S.diagonal() += br.weight * br.state.s;
  }
  S /= total_weight();
  return 0.5 * (S + S.transpose());
}

double BranchFit::max_linear_predictor(const Matrix& B) const {
  const Matrix VB = V_->V() * B;
  double worst = 0.0;
  Vector lin(V_->p());
  for (const auto& br : branches_) {
    lin.noalias() = VB * augment(u_[br.subject], static_cast<double>(br.y));
    worst = std::max(worst, lin.cwiseAbs().maxCoeff());
  }
  return worst;
}

Vector BranchFit::logistic_update(const Vector& b0) const {
  const auto N = static_cast<std::size_t>(data_->N());
  std::vector<double> target(N, 0.0), weight(N, 0.0);
  for (const auto& br : branches_) {
    target[br.subject] += br.weight * br.y;
    weight[br.subject] += br.weight;
  }
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < N; ++i)
    if (weight[i] > 0.0) used.push_back(i);
  Matrix Z(static_cast<Eigen::Index>(used.size()), data_->r() + 1);
  Vector t(Z.rows()), w(Z.rows());
  for (std::size_t k = 0; k < used.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    Z.row(row) = augment(u_[used[k]]).transpose();
    t(row) = target[used[k]];
    w(row) = weight[used[k]];
  }
  return weighted_logistic(Z, t, w, b0);
}

ModelParams BranchFit::update_theta(const ModelParams& theta) {
  const auto q = V_->q();
  const auto cols = theta.B.cols();
  Matrix G = Matrix::Zero(cols, cols);
  Matrix C = Matrix::Zero(q, cols);
  std::vector<Vector> mu(branches_.size());
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& br = branches_[k];
    const Vector ub = augment(u_[br.subject], static_cast<double>(br.y));
    mu[k] = theta.B * ub + br.state.m;
    G.noalias() += br.weight * ub * ub.transpose();
    C.noalias() += br.weight * mu[k] * ub.transpose();
  }
  Eigen::LDLT<Matrix> ldlt(G);
  Matrix B_new = ldlt.solve(C.transpose()).transpose();
  if (ldlt.info() != Eigen::Success || !B_new.allFinite()) {
    G.diagonal().array() += 1e-4;
    B_new = G.ldlt().solve(C.transpose()).transpose();
  }

  bool projected = false;
  const double spectral = Eigen::JacobiSVD<Matrix>(B_new).singularValues()(0);
  const double spectral_bound = constraints_.spectral_bound(q);
  if (spectral > spectral_bound) {
    B_new *= spectral_bound / spectral;
    projected = true;
  }
  const double linear = max_linear_predictor(B_new);
  const double linear_bound = constraints_.linear_bound(*V_);
  if (linear > linear_bound) {
    B_new *= linear_bound / linear;
    projected = true;
  }

  const double mean_bound = constraints_.mean_bound(*V_);
  std::vector<Vector> m_new(branches_.size());
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& br = branches_[k];
    m_new[k] = mu[k] - B_new * augment(u_[br.subject], static_cast<double>(br.y));
    projected |= project_mean(m_new[k], *V_, mean_bound);
  }

  ModelParams next = theta;
  if (!projected) {
    // Poisson terms depend on mu only, so this block step is an exact ascent.
    for (std::size_t k = 0; k < branches_.size(); ++k) branches_[k].state.m = m_new[k];
    next.B = B_new;
    next.Lambda = lambda_closed_form();
  } else {
    // Both endpoints are feasible and the constraint sets are convex, so
    // backtrack along the segment until the objective does not decrease.
    evaluate(theta);
    const double base = objective();
    std::vector<Vector> m_old(branches_.size());
    for (std::size_t k = 0; k < branches_.size(); ++k) m_old[k] = branches_[k].state.m;
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 30 && !accepted; ++ls, t *= 0.5) {
      for (std::size_t k = 0; k < branches_.size(); ++k)
        branches_[k].state.m = m_old[k] + t * (m_new[k] - m_old[k]);
      ModelParams trial = theta;
      trial.B = theta.B + t * (B_new - theta.B);
      trial.Lambda = lambda_closed_form();
      evaluate(trial);
      if (objective() >= base) {
        next = trial;
        accepted = true;
      }
    }
    if (!accepted) {
      for (std::size_t k = 0; k < branches_.size(); ++k) branches_[k].state.m = m_old[k];
      next.Lambda = lambda_closed_form();
      next.B = theta.B;
    }
  }
  next.b = logistic_update(theta.b);
  return next;
}

Matrix BranchFit::gradient_B(const ModelParams& theta) const {
  const PreparedModel model(theta, *V_, constraints_.eta_clip);
  Matrix grad = Matrix::Zero(theta.B.rows(), theta.B.cols());
  Vector A(V_->p());
  for (const auto& br : branches_) {
    const ElboKernel kernel(model, terms_[br.subject], u_[br.subject], br.y);
    std::size_t clamped = 0;
    kernel.value(br.state.m, br.state.s, A, clamped);
    const Vector r = V_->V().transpose() * (terms_[br.subject].x - A);
    grad.noalias() += br.weight * r * kernel.ubar_y().transpose();
  }
  return grad;
}

Vector BranchFit::gradient_b(const ModelParams& theta) const {
  Vector grad = Vector::Zero(theta.b.size());
  for (const auto& br : branches_) {
    const Vector ub = augment(u_[br.subject]);
    grad += br.weight * (static_cast<double>(br.y) - expit(theta.b.dot(ub))) * ub;
  }
  return grad;
}

bool means_feasible(const BranchFit& fit, double bound) {
  for (const auto& br : fit.branches())
    if ((fit.basis().V() * br.state.m).cwiseAbs().maxCoeff() > bound * (1.0 + 1e-12)) return false;
  return true;
}

Vector weighted_logistic(const Matrix& Z, const Vector& targets, const Vector& weights, Vector b,
                         int max_iters) {
  auto loglik = [&](const Vector& beta) {
    const Vector eta = Z * beta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      f += bernoulli_loglik(eta(i), 1.0) * targets(i) +
           bernoulli_loglik(eta(i), 0.0) * (weights(i) - targets(i));
    return f;
  };
  double f = loglik(b);
  for (int it = 0; it < max_iters; ++it) {
    const Vector eta = Z * b;
    Vector resid(eta.size()), curv(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double pr = expit(eta(i));
      resid(i) = targets(i) - weights(i) * pr;
      curv(i) = weights(i) * pr * (1.0 - pr);
    }
    const Vector g = Z.transpose() * resid;
    Matrix H = Z.transpose() * curv.asDiagonal() * Z;
    H.diagonal().array() += 1e-10;
    const Vector step = H.ldlt().solve(g);
    if (!step.allFinite() || step.lpNorm<Eigen::Infinity>() < 1e-12) break;
    double t = 1.0;
    bool accepted = false;
    Vector trial;
    double f_trial = f;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      trial = b + t * step;
      f_trial = loglik(trial);
      if (std::isfinite(f_trial) && f_trial >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double gain = f_trial - f;
    b = trial;
    f = f_trial;
    if (gain < 1e-14 * std::max(1.0, std::abs(f))) break;
  }
  return b;
}

}  // namespace score::detail

#include "score/gva.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace score {

void GvaFitConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::Config, "GVA max_iters must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorKind::Config, "GVA tol must be positive");
  if (!(step_init > 0.0)) throw Error(ErrorKind::Config, "GVA step_init must be positive");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw Error(ErrorKind::Config, "GVA backtrack_factor must lie in (0, 1)");
}

bool project_mean(Vector& m, const EmbeddingBasis& V, double bound) {
  const double worst = (V.V() * m).cwiseAbs().maxCoeff();
  if (worst <= bound) return false;
  m *= bound / worst;
  return true;
}

GvaState initial_state(const ElboKernel& kernel, double mean_bound) {
  const auto& model = kernel.model();
  const auto& basis = model.basis();
  const double ratio = static_cast<double>(basis.q()) / static_cast<double>(basis.p());
  GvaState st;
  st.m = ratio * kernel.subject().Vt_log1p - model.theta().B * kernel.ubar_y();
  project_mean(st.m, basis, mean_bound);
  st.s = Vector::Constant(basis.q(), 0.1);
  st.label = kernel.label();
  return st;
}

GvaFit GvaSolver::fit(const ElboKernel& kernel, GvaState start, double mean_bound,
                      const GvaFitConfig& cfg) {
  const auto& basis = kernel.model().basis();
  const Matrix& V = basis.V();
  const Matrix& V2 = basis.squared();
  const Matrix& V4 = basis.fourth();
  const Matrix& Li = kernel.model().lambda_inv();
  const Vector& Li_diag = kernel.model().lambda_inv_diag();
  const Vector& x = kernel.subject().x;
  const auto p = basis.p();
  const auto q = basis.q();

  A_.resize(p);
  A_trial_.resize(p);
  W_.resize(p, q);
  H_.resize(q, q);

  GvaFit out;
  out.zeta = std::move(start);
  out.zeta.label = kernel.label();
  project_mean(out.zeta.m, basis, mean_bound);
  Vector& m = out.zeta.m;
  Vector& s = out.zeta.s;
  rho_ = s.array().log().matrix();

  std::size_t clamped = 0;
  double J = kernel.value(m, s, A_, clamped);
  if (!std::isfinite(J)) {
    std::ostringstream os;
    os << "non-finite ELBO at GVA initialization (label " << kernel.label() << ")";
    throw Error(ErrorKind::Initialization, os.str());
  }
  if (cfg.record_trace) out.trace.push_back(J);

  for (int it = 0; it < cfg.max_iters; ++it) {
    resid_ = x - A_;
    g_m_.noalias() = V.transpose() * resid_;
    g_m_.noalias() -= Li * m;
    curv_.noalias() = V2.transpose() * A_;
    curv_ += Li_diag;
    g_rho_ = (0.5 - 0.5 * s.array() * curv_.array()).matrix();

    sqrtA_ = A_.array().sqrt().matrix();
    W_ = V.array().colwise() * sqrtA_.array();
    H_.setZero();
    H_.selfadjointView<Eigen::Lower>().rankUpdate(W_.transpose());
    H_.triangularView<Eigen::Lower>() += Li;
    Eigen::LLT<Matrix, Eigen::Lower> llt(H_);
    d_m_ = llt.solve(g_m_);

    h_rho_ = (0.5 * s.array() * curv_.array() +
              0.25 * s.array().square() * (V4.transpose() * A_).array())
                 .matrix();
    d_rho_ = (g_rho_.array() / h_rho_.array()).matrix();
    // Large log-variance moves overflow the exp term before the line search can react.
    const double rho_max = d_rho_.cwiseAbs().maxCoeff();
    if (rho_max > 5.0) d_rho_ *= 5.0 / rho_max;

    const double slope = g_m_.dot(d_m_) + g_rho_.dot(d_rho_);
    out.iters = it + 1;
    if (!(slope > 1e-14 * std::max(1.0, std::abs(J)))) {
      out.converged = true;
      break;
    }

    double t = cfg.step_init;
    bool accepted = false;
    double J_new = J;
    for (int ls = 0; ls < 60; ++ls) {
      m_trial_ = m + t * d_m_;
      project_mean(m_trial_, basis, mean_bound);
      rho_trial_ = rho_ + t * d_rho_;
      s_trial_ = rho_trial_.array().exp().matrix();
      std::size_t c = 0;
      J_new = kernel.value(m_trial_, s_trial_, A_trial_, c);
      const double moved = g_m_.dot(m_trial_ - m) + g_rho_.dot(rho_trial_ - rho_);
      if (std::isfinite(J_new) && J_new >= J + 1e-4 * std::max(moved, 0.0)) {
        accepted = true;
        break;
      }
      t *= cfg.backtrack_factor;
    }
    if (!accepted) {
      // No ascent left at working precision.
      out.converged = true;
      break;
    }
    const double change = J_new - J;
    m.swap(m_trial_);
    rho_.swap(rho_trial_);
    s.swap(s_trial_);
    A_.swap(A_trial_);
    J = J_new;
    if (cfg.record_trace) out.trace.push_back(J);
    if (change < cfg.tol * std::max(1.0, std::abs(J))) {
      out.converged = true;
      break;
    }
  }

  out.Q = J;
  // Recount clamps at the returned state.
  kernel.value(m, s, A_, out.clamped);
  return out;
}

GvaFit fit_gva_subject(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                       const EmbeddingBasis& V, const ConstraintSpec& constraints,
                       const GvaFitConfig& cfg, const GvaState* warm_start) {
  theta.validate();
  constraints.validate();
  cfg.validate();
  if (x.size() != V.p() || u.size() != theta.r())
    throw Error(ErrorKind::Dimension, "subject does not match basis/model dimensions");
  if (y != 0 && y != 1) throw Error(ErrorKind::Schema, "label hypothesis must be 0 or 1");
  const PreparedModel model(theta, V, constraints.eta_clip);
  const SubjectTerms terms = make_subject_terms(x, V);
  const ElboKernel kernel(model, terms, u, y);
  const double bound = constraints.mean_bound(V);
  GvaState start = warm_start ? *warm_start : initial_state(kernel, bound);
  if (start.m.size() != V.q() || start.s.size() != V.q() || (start.s.array() <= 0).any())
    throw Error(ErrorKind::Initialization, "warm start has wrong shape or non-positive s");
  GvaSolver solver;
  return solver.fit(kernel, std::move(start), bound, cfg);
}

double profile_q(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                 const EmbeddingBasis& V, const ConstraintSpec& constraints,
                 const GvaFitConfig& cfg) {
  return fit_gva_subject(theta, x, u, y, V, constraints, cfg).Q;
}

}  // namespace score

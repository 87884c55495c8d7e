#include "score/palm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

namespace score {

namespace {

double softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw Error(ErrorKind::Numeric, std::string("non-finite ELBO term: ") + term);
}

void check_subject_shapes(const ModelParams& theta, const Vector& x, const Vector& u,
                          const EmbeddingBasis& V) {
  if (x.size() != V.p() || theta.q() != V.q() || u.size() != theta.r()) {
    std::ostringstream os;
    os << "subject/model/basis shapes disagree: x " << x.size() << ", u " << u.size()
       << ", p " << V.p() << ", q " << V.q() << ", model q " << theta.q() << " r "
       << theta.r();
    throw Error(ErrorKind::Dimension, os.str());
  }
}

}  // namespace

EmbeddingBasis orthonormalize_basis(const Matrix& raw) {
  const auto p = raw.rows();
  const auto q = raw.cols();
  if (q < 1 || q >= p) {
    std::ostringstream os;
    os << "embedding matrix must have 1 <= q < p, got " << p << "x" << q;
    throw Error(ErrorKind::Dimension, os.str());
  }
  if (!raw.allFinite()) throw Error(ErrorKind::Numeric, "embedding matrix has non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(raw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, sv(0));
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) rank += sv(k) > tol;
  if (rank < q) {
    std::ostringstream os;
    os << "embedding matrix is rank deficient: numerical rank " << rank << " < q=" << q;
    throw Error(ErrorKind::Rank, os.str());
  }
  const double scale = std::sqrt(static_cast<double>(p) / static_cast<double>(q));
  Matrix V = scale * svd.matrixU() * svd.matrixV().transpose();
  return EmbeddingBasis::from_normalized(std::move(V));
}

PreparedModel::PreparedModel(const ModelParams& theta, const EmbeddingBasis& basis,
                             double eta_clip)
    : theta_(theta), basis_(&basis), eta_clip_(eta_clip) {
  if (theta.q() != basis.q() || theta.Lambda.rows() != basis.q())
    throw Error(ErrorKind::Dimension, "model latent dimension does not match basis");
  Eigen::LLT<Matrix> llt(theta.Lambda);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Decomposition, "Lambda is not positive definite");
  const auto q = theta.q();
  lambda_inv_ = llt.solve(Matrix::Identity(q, q));
  lambda_inv_ = 0.5 * (lambda_inv_ + lambda_inv_.transpose()).eval();
  lambda_inv_diag_ = lambda_inv_.diagonal();
  log_det_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  VB_ = basis.V() * theta.B;
}

SubjectTerms make_subject_terms(const Vector& x, const EmbeddingBasis& basis) {
  SubjectTerms t;
  t.x = x;
  t.Vtx = basis.V().transpose() * x;
  t.Vt_log1p = basis.V().transpose() * x.array().log1p().matrix();
  t.log_factorial = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) t.log_factorial += std::lgamma(x(j) + 1.0);
  return t;
}

double bernoulli_loglik(double t, double y) {
  return -y * softplus(-t) - (1.0 - y) * softplus(t);
}

ElboKernel::ElboKernel(const PreparedModel& model, const SubjectTerms& subject, const Vector& u,
                       int y)
    : model_(&model), subject_(&subject), y_(y) {
  ubar_y_ = augment(u, static_cast<double>(y));
  offset_ = model.VB() * ubar_y_;
  const auto& theta = model.theta();
  const double t = theta.b.dot(augment(u));
  const double q = static_cast<double>(theta.q());
  constant_ = subject.x.dot(offset_) - subject.log_factorial - 0.5 * model.log_det_lambda() +
              0.5 * q + bernoulli_loglik(t, static_cast<double>(y));
}

double ElboKernel::value(const Vector& m, const Vector& s, Vector& A,
                         std::size_t& clamped) const {
  const auto& basis = model_->basis();
  A.noalias() = basis.V() * m;
  A.noalias() += 0.5 * (basis.squared() * s);
  A += offset_;
  const double clip = model_->eta_clip();
  double sumA = 0.0;
  for (Eigen::Index j = 0; j < A.size(); ++j) {
    double eta = A(j);
    if (eta > clip) {
      eta = clip;
      ++clamped;
    }
    A(j) = std::exp(eta);
    sumA += A(j);
  }
  const auto& Li = model_->lambda_inv();
  double log_s = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) log_s += std::log(s(k));
  return constant_ + subject_->Vtx.dot(m) - sumA - 0.5 * m.dot(Li * m) -
         0.5 * model_->lambda_inv_diag().dot(s) + 0.5 * log_s;
}

ElboValue elbo(const ModelParams& theta, const GvaState& zeta, const Vector& x, const Vector& u,
               int y, const EmbeddingBasis& V, const ConstraintSpec& constraints) {
  check_subject_shapes(theta, x, u, V);
  if (zeta.m.size() != V.q() || zeta.s.size() != V.q())
    throw Error(ErrorKind::Dimension, "variational state has wrong dimension");
  if ((zeta.s.array() <= 0.0).any())
    throw Error(ErrorKind::Numeric, "variational variances must be positive");
  PreparedModel model(theta, V, constraints.eta_clip);
  const Vector ubar_y = augment(u, static_cast<double>(y));
  const Vector lin = model.VB() * ubar_y + V.V() * zeta.m;
  const Vector eta = lin + 0.5 * (V.squared() * zeta.s);

  std::size_t clamped = 0;
  double poisson_linear = x.dot(lin);
  double sumA = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    double e = eta(j);
    if (e > constraints.eta_clip) {
      e = constraints.eta_clip;
      ++clamped;
    }
    sumA += std::exp(e);
  }
  double log_fact = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) log_fact += std::lgamma(x(j) + 1.0);
  const double log_det = model.log_det_lambda();
  const double quad = zeta.m.dot(model.lambda_inv() * zeta.m);
  const double trace = model.lambda_inv_diag().dot(zeta.s);
  const double log_det_s = zeta.s.array().log().sum();
  const double q = static_cast<double>(V.q());
  const double bern = bernoulli_loglik(theta.b.dot(augment(u)), static_cast<double>(y));

  require_finite(poisson_linear, "sum_j x_j V_j'(B Ubar_y + m)");
  require_finite(sumA, "sum_j A_j");
  require_finite(log_fact, "sum_j log(x_j!)");
  require_finite(log_det, "log det(Lambda)");
  require_finite(quad, "m' Lambda^{-1} m");
  require_finite(trace, "tr(Lambda^{-1} S)");
  require_finite(log_det_s, "log det(S)");
  require_finite(bern, "Bernoulli label term");

  const double value = poisson_linear - sumA - log_fact - 0.5 * log_det - 0.5 * quad -
                       0.5 * trace + 0.5 * log_det_s + 0.5 * q + bern;
  require_finite(value, "total");
  return {value, clamped};
}

ElboGradients elbo_gradients(const ModelParams& theta, const GvaState& zeta, const Vector& x,
                             const Vector& u, int y, const EmbeddingBasis& V,
                             const ConstraintSpec& constraints) {
  check_subject_shapes(theta, x, u, V);
  PreparedModel model(theta, V, constraints.eta_clip);
  const SubjectTerms terms = make_subject_terms(x, V);
  ElboKernel kernel(model, terms, u, y);
  Vector A(V.p());
  std::size_t clamped = 0;
  const double value = kernel.value(zeta.m, zeta.s, A, clamped);
  require_finite(value, "total");

  const Vector resid_latent = V.V().transpose() * (x - A);
  ElboGradients g;
  g.grad_m = resid_latent - model.lambda_inv() * zeta.m;
  const Vector curv = V.squared().transpose() * A + model.lambda_inv_diag();
  g.grad_log_s = (zeta.s.array() * (-0.5 * curv.array()) + 0.5).matrix();
  g.grad_B = resid_latent * kernel.ubar_y().transpose();
  const Vector ubar = augment(u);
  g.grad_b = (static_cast<double>(y) - expit(theta.b.dot(ubar))) * ubar;
  g.clamped = clamped;
  return g;
}

namespace {

struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> log_weight_e;  // log(w_k) + z_k^2
};

// Golub-Welsch nodes; weights from the Christoffel sum of normalized
// Hermite functions, which stays accurate in the tails.
GaussHermite gauss_hermite(int n) {
  Matrix J = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k) / 2.0);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J, Eigen::EigenvaluesOnly);
  GaussHermite gh;
  const double pi_quarter = std::pow(std::numbers::pi, -0.25);
  for (int k = 0; k < n; ++k) {
    const double z = es.eigenvalues()(k);
    double h_prev = 0.0;
    double h = pi_quarter * std::exp(-0.5 * z * z);
    double sum = h * h;
    for (int j = 0; j + 1 < n; ++j) {
      const double h_next = std::sqrt(2.0 / (j + 1)) * z * h - std::sqrt(double(j) / (j + 1)) * h_prev;
      h_prev = h;
      h = h_next;
      sum += h * h;
    }
    gh.nodes.push_back(z);
    gh.log_weight_e.push_back(-std::log(sum));
  }
  return gh;
}

}  // namespace

double loglik_quadrature(const ModelParams& theta, const Vector& x, const Vector& u, int y,
                         const EmbeddingBasis& V, int nodes) {
  check_subject_shapes(theta, x, u, V);
  const auto q = V.q();
  if (q > 3) throw Error(ErrorKind::Unsupported, "quadrature oracle supports q <= 3 only");
  if (nodes < 20) throw Error(ErrorKind::Config, "quadrature needs at least 20 nodes");

  Eigen::LLT<Matrix> llt_lambda(theta.Lambda);
  if (llt_lambda.info() != Eigen::Success)
    throw Error(ErrorKind::Decomposition, "Lambda is not positive definite");
  const Matrix lambda_inv = llt_lambda.solve(Matrix::Identity(q, q));
  const double log_det = 2.0 * llt_lambda.matrixLLT().diagonal().array().log().sum();
  const Vector offset = V.V() * theta.B * augment(u, static_cast<double>(y));
  double constant = bernoulli_loglik(theta.b.dot(augment(u)), static_cast<double>(y)) -
                    0.5 * log_det - 0.5 * static_cast<double>(q) * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < x.size(); ++j) constant -= std::lgamma(x(j) + 1.0);

  auto log_joint = [&](const Vector& w) {
    const Vector eta = offset + V.V() * w;
    return constant + x.dot(eta) - eta.array().exp().sum() - 0.5 * w.dot(lambda_inv * w);
  };

  // Posterior mode of W by damped Newton; the log joint is strictly concave.
  Vector w = Vector::Zero(q);
  double f = log_joint(w);
  Matrix H(q, q);
  for (int it = 0; it < 200; ++it) {
    const Vector mu = (offset + V.V() * w).array().exp().matrix();
    const Vector g = V.V().transpose() * (x - mu) - lambda_inv * w;
    H = V.V().transpose() * mu.asDiagonal() * V.V() + lambda_inv;
    const Vector step = H.llt().solve(g);
    double t = 1.0;
    double f_new = f;
    Vector w_new = w;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = w + t * step;
      f_new = log_joint(w_new);
      if (std::isfinite(f_new) && f_new >= f) break;
      t *= 0.5;
    }
    const double change = std::abs(f_new - f);
    if (!(f_new >= f)) break;
    w = w_new;
    f = f_new;
    if (g.lpNorm<Eigen::Infinity>() < 1e-13 || change < 1e-15 * std::max(1.0, std::abs(f))) break;
  }
  {
    const Vector mu = (offset + V.V() * w).array().exp().matrix();
    H = V.V().transpose() * mu.asDiagonal() * V.V() + lambda_inv;
  }
  // W = w_hat + sqrt(2) L z with L L' = H^{-1}
  const Matrix cov = H.llt().solve(Matrix::Identity(q, q));
  Eigen::LLT<Matrix> llt_cov(cov);
  const Matrix L = llt_cov.matrixL();
  const double log_jac = 0.5 * static_cast<double>(q) * std::log(2.0) +
                         L.diagonal().array().log().sum();

  const GaussHermite gh = gauss_hermite(nodes);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(std::pow(nodes, q)));
  std::vector<int> idx(static_cast<std::size_t>(q), 0);
  Vector z(q);
  const double sqrt2 = std::sqrt(2.0);
  while (true) {
    double lw = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      z(k) = gh.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
      lw += gh.log_weight_e[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    }
    terms.push_back(lw + log_joint(w + sqrt2 * (L * z)));
    Eigen::Index k = 0;
    while (k < q && ++idx[static_cast<std::size_t>(k)] == nodes) {
      idx[static_cast<std::size_t>(k)] = 0;
      ++k;
    }
    if (k == q) break;
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - peak);
  return peak + std::log(acc) + log_jac;
}

double snr(const ModelParams& theta) {
  Eigen::LLT<Matrix> llt(theta.Lambda);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Decomposition, "Lambda is not positive definite");
  const Vector by = theta.label_effect();
  return by.dot(llt.solve(by));
}

}  // namespace score

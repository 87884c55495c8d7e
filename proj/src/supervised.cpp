#include "score/supervised.hpp"

#include <cmath>
#include <sstream>

#include "branch_fit.hpp"
#include "score/metrics.hpp"

namespace score {

void SupFitConfig::validate() const {
  if (outer_max_iters < 1) throw Error(ErrorKind::Config, "outer_max_iters must be >= 1");
  if (!(outer_tol > 0.0)) throw Error(ErrorKind::Config, "outer_tol must be positive");
  if (threads < 1) throw Error(ErrorKind::Config, "threads must be >= 1");
  gva.validate();
  constraints.validate();
}

void check_label_support(const Dataset& data) {
  std::size_t n = 0, ones = 0;
  for (const auto& l : data.labels) {
    if (!l) continue;
    ++n;
    ones += (*l == 1);
  }
  if (n == 1) throw Error(ErrorKind::InsufficientData, "need at least 2 labeled subjects, got 1");
  if (n == 0 || ones == 0 || ones == n) {
    std::ostringstream os;
    os << "labeled subjects must contain both classes (n=" << n << ", positives=" << ones << ")";
    throw Error(ErrorKind::DegenerateLabels, os.str());
  }
}

SupervisedInit init_from_soft_labels(const Dataset& data, const EmbeddingBasis& V,
                                     const std::vector<double>& soft_labels) {
  const auto N = data.N();
  const auto q = V.q();
  const auto cols = data.r() + 2;
  if (data.p() != V.p()) throw Error(ErrorKind::Dimension, "dataset p does not match basis");
  if (static_cast<Eigen::Index>(soft_labels.size()) != N)
    throw Error(ErrorKind::Dimension, "one soft label per subject required");
  const double ratio = static_cast<double>(q) / static_cast<double>(V.p());

  Matrix Zt(q, N);
  Matrix D(cols, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = data.counts(static_cast<std::size_t>(i));
    Zt.col(i) = ratio * (V.V().transpose() * x.array().log1p().matrix());
    D.col(i) = augment(data.U.row(i).transpose(), soft_labels[static_cast<std::size_t>(i)]);
  }

  SupervisedInit init;
  Matrix G = D * D.transpose();
  const Vector sv = Eigen::JacobiSVD<Matrix>(G).singularValues();
  if (sv(sv.size() - 1) <= 1e-10 * std::max(1.0, sv(0))) {
    G.diagonal().array() += 1e-4;
    init.ridge_fallback = true;
  }
  const Matrix B0 = G.ldlt().solve(D * Zt.transpose()).transpose();
  const Matrix R = Zt - B0 * D;

  const Vector mean = R.rowwise().mean();
  const Matrix centered = R.colwise() - mean;
  Matrix cov = centered * centered.transpose() / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  const Vector floored = es.eigenvalues().cwiseMax(1e-3);
  cov = es.eigenvectors() * floored.asDiagonal() * es.eigenvectors().transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();

  Matrix Z(N, data.r() + 1);
  Vector t(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    Z.row(i) = augment(data.U.row(i).transpose()).transpose();
    t(i) = soft_labels[static_cast<std::size_t>(i)];
  }
  const Vector b0 =
      detail::weighted_logistic(Z, t, Vector::Ones(N), Vector::Zero(data.r() + 1));

  init.theta0 = ModelParams{B0, cov, b0};
  ConstraintSpec defaults;
  const double bound = defaults.mean_bound(V);
  init.zeta0.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    GvaState st;
    st.m = R.col(i);
    project_mean(st.m, V, bound);
    st.s = Vector::Constant(q, 0.1);
    st.label = soft_labels[static_cast<std::size_t>(i)] >= 0.5 ? 1 : 0;
    init.zeta0.push_back(std::move(st));
  }
  return init;
}

SupervisedInit init_supervised(const Dataset& data, const EmbeddingBasis& V) {
  check_label_support(data);
  if (data.labeled_count() != static_cast<std::size_t>(data.N()))
    throw Error(ErrorKind::Config, "supervised initialization requires every subject labeled");
  std::vector<double> y;
  y.reserve(data.labels.size());
  for (const auto& l : data.labels) y.push_back(static_cast<double>(*l));
  return init_from_soft_labels(data, V, y);
}

SupervisedFit fit_supervised_states(const Dataset& data, const EmbeddingBasis& V,
                                    const SupFitConfig& cfg, const ModelParams* truth) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  data.validate();
  SupervisedInit init = init_supervised(data, V);

  detail::BranchFit fit(data, V, cfg.constraints, cfg.gva, cfg.threads);
  for (std::size_t i = 0; i < init.zeta0.size(); ++i)
    fit.add_branch(i, *data.labels[i], 1.0, std::move(init.zeta0[i]));

  SupervisedFit out;
  FitReport& report = out.report;
  report.ridge_fallback = init.ridge_fallback;
  if (init.ridge_fallback) report.warnings.push_back("singular initial design; ridge fallback used");
  ModelParams theta = init.theta0;

  auto record_err = [&] {
    if (truth) report.err_trace.push_back(err_theta(theta, *truth));
  };

  fit.evaluate(theta);
  report.objective_trace.push_back(fit.objective());
  detail::RefitStats stats = fit.refit(theta);
  double prev = fit.objective();
  report.objective_trace.push_back(prev);
  record_err();

  for (int it = 1; it <= cfg.outer_max_iters; ++it) {
    theta = fit.update_theta(theta);
    stats = fit.refit(theta);
    const double J = fit.objective();
    report.objective_trace.push_back(J);
    report.iterations = it;
    record_err();
    if (J < prev - 1e-8 * std::max(1.0, std::abs(prev))) {
      std::ostringstream os;
      os << "objective decreased at outer iteration " << it << " by " << prev - J;
      report.warnings.push_back(os.str());
    }
    const bool done = std::abs(J - prev) < cfg.outer_tol * std::max(1.0, std::abs(prev));
    prev = J;
    if (done) {
      report.converged = true;
      break;
    }
  }
  report.theta = theta;
  report.clamp_count = stats.clamped;
  if (stats.not_converged > 0) {
    std::ostringstream os;
    os << stats.not_converged << " subject GVA fits hit the iteration cap";
    report.warnings.push_back(os.str());
  }
  out.states.reserve(fit.branches().size());
  for (auto& br : fit.branches()) out.states.push_back(br.state);
  report.wall_time = std::chrono::steady_clock::now() - start;
  return out;
}

FitReport fit_supervised(const Dataset& data, const EmbeddingBasis& V, const SupFitConfig& cfg,
                         const ModelParams* truth) {
  return fit_supervised_states(data, V, cfg, truth).report;
}

}  // namespace score

#include "score/predictor.hpp"

#include <algorithm>
#include <sstream>

#include "score/parallel.hpp"
#include "score/semisup.hpp"

namespace score {

void PredictConfig::validate() const {
  gva.validate();
  constraints.validate();
  if (!(gamma_floor >= 0.0 && gamma_floor < 0.5))
    throw Error(ErrorKind::Config, "gamma_floor must lie in [0, 0.5)");
  if (threads < 1) throw Error(ErrorKind::Config, "threads must be >= 1");
}

namespace {

SubjectPrediction predict_prepared(const PreparedModel& model, const SubjectTerms& terms,
                                   const Vector& u, const PredictConfig& cfg, GvaSolver& solver) {
  const auto& theta = model.theta();
  const double bound = cfg.constraints.mean_bound(model.basis());
  SubjectPrediction out;
  Vector E[2];
  double Q[2];
  for (int y = 0; y < 2; ++y) {
    const ElboKernel kernel(model, terms, u, y);
    GvaFit fit = solver.fit(kernel, initial_state(kernel, bound), bound, cfg.gva);
    Q[y] = fit.Q;
    E[y] = theta.B * kernel.ubar_y() + fit.zeta.m;
    out.clamped += fit.clamped;
  }
  out.Q0 = Q[0];
  out.Q1 = Q[1];
  const double g = responsibility(Q[0], Q[1], cfg.gamma_floor);
  out.embedding.gamma = g;
  out.embedding.E = (1.0 - g) * E[0] + g * E[1];
  out.embedding.E0 = std::move(E[0]);
  out.embedding.E1 = std::move(E[1]);
  return out;
}

void check_inputs(const Vector& x, const Vector& u, const ModelParams& theta,
                  const EmbeddingBasis& V) {
  theta.validate();
  if (theta.q() != V.q()) throw Error(ErrorKind::Dimension, "model q does not match basis");
  if (x.size() != V.p() || u.size() != theta.r())
    throw Error(ErrorKind::Dimension, "subject does not match basis/model dimensions");
  if ((x.array() < 0).any()) throw Error(ErrorKind::Schema, "negative count");
}

}  // namespace

SubjectPrediction predict_subject(const Vector& x, const Vector& u, const ModelParams& theta,
                                  const EmbeddingBasis& V, const PredictConfig& cfg) {
  cfg.validate();
  check_inputs(x, u, theta, V);
  const PreparedModel model(theta, V, cfg.constraints.eta_clip);
  const SubjectTerms terms = make_subject_terms(x, V);
  GvaSolver solver;
  return predict_prepared(model, terms, u, cfg, solver);
}

double predict_proba(const Vector& x, const Vector& u, const ModelParams& theta,
                     const EmbeddingBasis& V, const PredictConfig& cfg) {
  return predict_subject(x, u, theta, V, cfg).embedding.gamma;
}

EmbeddingEstimate embed(const Vector& x, const Vector& u, const ModelParams& theta,
                        const EmbeddingBasis& V, const PredictConfig& cfg) {
  return predict_subject(x, u, theta, V, cfg).embedding;
}

std::vector<SubjectPrediction> predict_batch(const Dataset& data, const ModelParams& theta,
                                             const EmbeddingBasis& V, const PredictConfig& cfg) {
  cfg.validate();
  theta.validate();
  if (data.p() != V.p() || data.r() != theta.r() || theta.q() != V.q())
    throw Error(ErrorKind::Dimension, "dataset does not match model/basis dimensions");
  const PreparedModel model(theta, V, cfg.constraints.eta_clip);
  const auto N = static_cast<std::size_t>(data.N());
  std::vector<SubjectPrediction> out(N);
  std::vector<GvaSolver> solvers(static_cast<std::size_t>(cfg.threads));
  parallel_for(N, cfg.threads, [&](std::size_t i, int worker) {
    try {
      const SubjectTerms terms = make_subject_terms(data.counts(i), V);
      out[i] = predict_prepared(model, terms, data.covariates(i), cfg,
                                solvers[static_cast<std::size_t>(worker)]);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "prediction failed for subject " << i;
      if (i < data.ids.size()) os << " (" << data.ids[i] << ")";
      os << ": " << e.what();
      throw Error(e.kind(), os.str());
    }
  });
  return out;
}

double oracle_label_posterior(const ModelParams& theta, const Vector& xi_bar, const Vector& u) {
  theta.validate();
  if (xi_bar.size() != theta.q() || u.size() != theta.r())
    throw Error(ErrorKind::Dimension, "oracle posterior dimension mismatch");
  const Eigen::LLT<Matrix> llt(theta.Lambda);
  const Vector ub = augment(u);
  const Vector w = llt.solve(Vector(theta.label_effect()));
  const Vector mu0 = theta.B * augment(u, 0.0);
  const double t = theta.b.dot(ub) + w.dot(xi_bar - mu0) - 0.5 * w.dot(theta.label_effect());
  return expit(t);
}

}  // namespace score

#include "score/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "score/metrics.hpp"
#include "score/predictor.hpp"

namespace score {

const char* to_string(Method m) {
  switch (m) {
    case Method::Sup: return "sup";
    case Method::Unsup: return "unsup";
    case Method::Semisup: return "semisup";
  }
  return "semisup";
}

Method parse_method(const std::string& s) {
  if (s == "sup") return Method::Sup;
  if (s == "unsup") return Method::Unsup;
  if (s == "semisup") return Method::Semisup;
  throw Error(ErrorKind::Config, "method must be sup, unsup or semisup; got '" + s + "'");
}

namespace {

void summarize(MetricSummary& m) {
  const auto n = m.values.size();
  if (n == 0) return;
  double s = 0.0;
  for (double v : m.values) s += v;
  m.mean = s / static_cast<double>(n);
  if (n < 2) {
    m.sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (double v : m.values) ss += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(n - 1));
}

struct MethodFit {
  ModelParams theta;
  std::vector<double> err_trace;
};

MethodFit fit_method(Method method, const SimData& sim, const BenchmarkOptions& opts) {
  const auto& data = sim.data;
  const auto& V = sim.truth.V;
  const ModelParams* truth = &sim.truth.theta0;
  SupFitConfig sup = opts.sup;
  sup.threads = opts.threads;
  switch (method) {
    case Method::Sup: {
      const Dataset labeled = data.subset(data.labeled_indices());
      FitReport r = fit_supervised(labeled, V, sup, truth);
      return {std::move(r.theta), std::move(r.err_trace)};
    }
    case Method::Semisup: {
      ScoreFit f = fit_score(data, V, opts.em, sup, truth);
      return {std::move(f.theta_hat), std::move(f.report.err_trace)};
    }
    case Method::Unsup: {
      // Same iteration budget as the semi-supervised fit of this cell.
      EmConfig em = opts.em;
      em.T = em.resolve_T(static_cast<std::size_t>(data.N()), data.labeled_count());
      ScoreFit f = fit_unsupervised(data, V, em, sup, truth);
      return {std::move(f.theta_hat), std::move(f.report.err_trace)};
    }
  }
  throw Error(ErrorKind::Config, "unknown method");
}

}  // namespace

std::vector<BenchmarkResult> run_benchmark(const std::vector<SimConfig>& grid,
                                           const BenchmarkOptions& opts) {
  if (opts.replications < 1) throw Error(ErrorKind::Config, "replications must be >= 1");
  if (opts.methods.empty()) throw Error(ErrorKind::Config, "no methods requested");
  opts.em.validate();
  opts.sup.validate();
  for (const auto& c : grid) c.validate();

  std::vector<BenchmarkResult> results;
  for (const auto& cell : grid) {
    const std::size_t first = results.size();
    for (auto m : opts.methods) {
      BenchmarkResult r;
      r.config = cell;
      r.method = m;
      r.replications = opts.replications;
      results.push_back(std::move(r));
    }
    for (int rep = 0; rep < opts.replications; ++rep) {
      SimConfig cfg = cell;
      cfg.seed = derive_seed(cell.seed, static_cast<std::uint64_t>(rep));
      std::optional<SimData> generated;
      try {
        generated.emplace(gen_dataset(cfg, opts.threads));
      } catch (const Error& e) {
        for (std::size_t k = 0; k < opts.methods.size(); ++k) {
          results[first + k].failures++;
          results[first + k].failure_messages.push_back("replication " + std::to_string(rep) +
                                                        ": " + e.what());
        }
        continue;
      }
      const SimData& sim = *generated;
      for (std::size_t k = 0; k < opts.methods.size(); ++k) {
        BenchmarkResult& res = results[first + k];
        try {
          const auto t0 = std::chrono::steady_clock::now();
          MethodFit fit = fit_method(opts.methods[k], sim, opts);
          const double secs =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          const auto& th0 = sim.truth.theta0;
          res.metrics["err_B"].values.push_back(rel_fnorm(fit.theta.B, th0.B));
          res.metrics["err_Lambda"].values.push_back(rel_fnorm(fit.theta.Lambda, th0.Lambda));
          res.metrics["Err"].values.push_back(err_theta(fit.theta, th0));
          res.seconds.push_back(secs);
          res.err_traces.push_back(std::move(fit.err_trace));
          if (opts.predictions) {
            PredictConfig pc;
            pc.gva = opts.sup.gva;
            pc.constraints = opts.sup.constraints;
            pc.gamma_floor = opts.em.gamma_floor;
            pc.threads = opts.threads;
            const auto preds = predict_batch(sim.data, fit.theta, sim.truth.V, pc);
            Matrix E(sim.data.N(), cfg.q);
            for (std::size_t i = 0; i < preds.size(); ++i)
              E.row(static_cast<Eigen::Index>(i)) = preds[i].embedding.E.transpose();
            res.metrics["cosine"].values.push_back(cosine_embeddings(E, sim.truth.xi_bar));
            std::vector<double> scores;
            std::vector<int> labels;
            for (auto i : sim.data.unlabeled_indices()) {
              scores.push_back(preds[i].embedding.gamma);
              labels.push_back(sim.truth.labels_full[i]);
            }
            if (!scores.empty()) {
              res.metrics["brier"].values.push_back(brier_score(scores, labels));
              const auto pos = std::count(labels.begin(), labels.end(), 1);
              if (pos > 0 && pos < static_cast<long>(labels.size())) {
                res.metrics["auc"].values.push_back(auc_score(scores, labels));
                res.metrics["prauc"].values.push_back(prauc_score(scores, labels));
              }
            }
          }
        } catch (const Error& e) {
          res.failures++;
          res.failure_messages.push_back("replication " + std::to_string(rep) + ": " + e.what());
        }
      }
    }
    for (std::size_t k = first; k < results.size(); ++k)
      for (auto& [name, m] : results[k].metrics) summarize(m);
  }
  return results;
}

}  // namespace score

#pragma once

#include <map>
#include <string>
#include <vector>

#include "score/semisup.hpp"
#include "score/simulator.hpp"
#include "score/supervised.hpp"

namespace score {

enum class Method { Sup, Unsup, Semisup };
const char* to_string(Method m);
Method parse_method(const std::string& s);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;             // sample sd over successful replications, 0 for one
  std::vector<double> values;  // per replication, replication order
};

struct BenchmarkResult {
  SimConfig config;
  Method method = Method::Semisup;
  int replications = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;
  // err_B, err_Lambda, Err, cosine, auc, prauc, brier
  std::map<std::string, MetricSummary> metrics;
  // Wall time of each successful fit; kept apart so the metrics stay
  // reproducible byte for byte.
  std::vector<double> seconds;
  // Err(theta_t) per replication.
  std::vector<std::vector<double>> err_traces;
};

struct BenchmarkOptions {
  std::vector<Method> methods{Method::Sup, Method::Unsup, Method::Semisup};
  int replications = 20;
  int threads = 1;
  // Embedding cosine and classification metrics need two GVA fits per
  // subject at theta_hat; disable when only parameter errors are wanted.
  bool predictions = true;
  EmConfig em;
  SupFitConfig sup;
};

// Replication k of a cell uses simulator seed derive_seed(config.seed, k),
// shared by all methods so they see the same data.
std::vector<BenchmarkResult> run_benchmark(const std::vector<SimConfig>& grid,
                                           const BenchmarkOptions& opts);

}  // namespace score

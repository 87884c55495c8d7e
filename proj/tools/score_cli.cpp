// score: simulate, fit, predict, embed, eval and benchmark from the shell.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "score/benchmark.hpp"
#include "score/io.hpp"
#include "score/metrics.hpp"
#include "score/predictor.hpp"
#include "score/semisup.hpp"
#include "score/simulator.hpp"
#include "score/supervised.hpp"

using nlohmann::json;
using namespace score;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 70;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Schema: return 10;
    case ErrorKind::Dimension: return 11;
    case ErrorKind::Rank: return 12;
    case ErrorKind::Decomposition: return 13;
    case ErrorKind::Numeric: return 14;
    case ErrorKind::DegenerateLabels: return 15;
    case ErrorKind::InsufficientData: return 16;
    case ErrorKind::Initialization: return 17;
    case ErrorKind::Unsupported: return 18;
    case ErrorKind::Version: return 19;
    case ErrorKind::Checksum: return 20;
    case ErrorKind::Io: return 21;
    case ErrorKind::Generation: return 22;
    case ErrorKind::Config: return 23;
  }
  return kExitInternal;
}

const char* kExitHelp =
    "Exit codes:\n"
    "  0 success            2 usage (unknown flag, bad value)\n"
    "  10 schema            11 dimension         12 rank\n"
    "  13 decomposition     14 numeric           15 degenerate labels\n"
    "  16 insufficient data 17 initialization    18 unsupported\n"
    "  19 model version     20 model checksum    21 io\n"
    "  22 generation        23 config            70 internal\n"
    "Failures print one JSON error record on stderr.";

int report_error(const std::string& kind, const std::string& message, int code) {
  json rec{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << rec.dump() << std::endl;
  return code;
}

struct Common {
  int threads = 1;
};

struct FitOptions {
  std::string data, basis, mode = "semisup", out_model, out_report, truth;
  SupFitConfig sup;
  EmConfig em;
  bool no_warm_start = false;
};

void add_fit_controls(CLI::App* cmd, FitOptions& o) {
  cmd->add_option("--outer-max-iters", o.sup.outer_max_iters, "supervised outer iteration cap")
      ->capture_default_str();
  cmd->add_option("--outer-tol", o.sup.outer_tol, "supervised relative objective tolerance")
      ->capture_default_str();
  cmd->add_option("--gva-max-iters", o.sup.gva.max_iters, "per-subject GVA iteration cap")
      ->capture_default_str();
  cmd->add_option("--gva-tol", o.sup.gva.tol, "per-subject GVA relative tolerance")
      ->capture_default_str();
  cmd->add_option("--K-B", o.sup.constraints.K_B, "Omega_B radius constant")->capture_default_str();
  cmd->add_option("--K-M", o.sup.constraints.K_M, "Omega_M radius constant")->capture_default_str();
  cmd->add_option("--eta-clip", o.sup.constraints.eta_clip, "linear predictor clamp")
      ->capture_default_str();
  cmd->add_option("--T", o.em.T, "EM iterations (0: max(T-floor, ceil(c_T log(N/n))))")
      ->capture_default_str();
  cmd->add_option("--c-T", o.em.c_T, "EM iteration rule constant")->capture_default_str();
  cmd->add_option("--T-floor", o.em.T_floor, "minimum EM iterations")->capture_default_str();
  cmd->add_option("--m-step-passes", o.em.m_step_max_passes, "M-step pass cap")
      ->capture_default_str();
  cmd->add_option("--m-step-tol", o.em.m_step_tol, "M-step relative O_F tolerance")
      ->capture_default_str();
  cmd->add_option("--gamma-floor", o.em.gamma_floor, "responsibility clamp")
      ->capture_default_str();
  cmd->add_flag("--no-warm-start", o.no_warm_start, "refit variational states from scratch");
}

json vec_json(const std::vector<double>& v) { return json(v); }

json report_json(const FitReport& r, const std::string& mode) {
  return json{{"mode", mode},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"clamp_count", r.clamp_count},
              {"wall_time_seconds", r.wall_time.count()},
              {"objective_trace", vec_json(r.objective_trace)},
              {"err_trace", vec_json(r.err_trace)},
              {"warnings", r.warnings},
              {"ridge_fallback", r.ridge_fallback}};
}

int cmd_simulate(const SimConfig& cfg, const std::string& out_data, const std::string& out_truth,
                 const std::string& out_basis, const Common& common) {
  SimData sim = gen_dataset(cfg, common.threads);
  save_dataset(sim.data, out_data);
  if (!out_truth.empty()) save_truth(sim.truth, sim.data.ids, cfg, out_truth);
  if (!out_basis.empty()) save_basis(sim.truth.V, out_basis);
  return 0;
}

int cmd_fit(FitOptions o, const Common& common) {
  o.sup.threads = common.threads;
  o.em.warm_start = !o.no_warm_start;
  const Dataset data = load_dataset(o.data);
  const EmbeddingBasis V = load_basis(o.basis);
  if (V.p() != data.p())
    throw Error(ErrorKind::Dimension, "basis has p = " + std::to_string(V.p()) +
                                          " but the dataset has " + std::to_string(data.p()) +
                                          " count columns");
  ModelParams truth_theta;
  const ModelParams* truth = nullptr;
  if (!o.truth.empty()) {
    truth_theta = load_truth(o.truth).theta0;
    truth = &truth_theta;
  }

  ModelArtifact model;
  model.p = data.p();
  model.constraints = o.sup.constraints;
  json report;
  if (o.mode == "sup") {
    const Dataset labeled = data.subset(data.labeled_indices());
    check_label_support(labeled);
    FitReport r = fit_supervised(labeled, V, o.sup, truth);
    model.theta = r.theta;
    report = report_json(r, o.mode);
  } else if (o.mode == "semisup" || o.mode == "unsup") {
    ScoreFit f = o.mode == "semisup" ? fit_score(data, V, o.em, o.sup, truth)
                                     : fit_unsupervised(data, V, o.em, o.sup, truth);
    model.theta = f.theta_hat;
    report = report_json(f.report, o.mode);
    report["T"] = f.T;
    report["plateau_iteration"] = f.plateau_iteration;
    report["of_before"] = vec_json(f.of_before);
    report["of_after"] = vec_json(f.of_after);
    report["bound_trace"] = vec_json(f.bound_trace);
    json gam = json::object();
    for (std::size_t j = 0; j < f.responsibilities.subjects.size(); ++j)
      gam[data.ids[f.responsibilities.subjects[j]]] = f.responsibilities.gamma(j);
    report["responsibilities"] = gam;
  } else {
    throw Error(ErrorKind::Config, "mode must be sup, unsup or semisup");
  }
  model.meta = {{"mode", o.mode}, {"N", data.N()}, {"n", data.labeled_count()}};
  save_model(model, o.out_model);
  if (!o.out_report.empty()) write_text_file(o.out_report, report.dump(1) + "\n");
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& basis_path,
                const std::string& data_path, const std::string& out, bool embeddings,
                const FitOptions& o, const Common& common) {
  const ModelArtifact model = load_model(model_path);
  const EmbeddingBasis V = load_basis(basis_path);
  const Dataset data = load_dataset(data_path);
  if (V.p() != model.p || V.q() != model.theta.q())
    throw Error(ErrorKind::Dimension, "basis does not match the model dimensions");
  PredictConfig pc;
  pc.gva = o.sup.gva;
  pc.constraints = model.constraints;
  pc.gamma_floor = o.em.gamma_floor;
  pc.threads = common.threads;
  const auto preds = predict_batch(data, model.theta, V, pc);
  PredictionTable t;
  t.ids = data.ids;
  if (embeddings) t.E.resize(data.N(), V.q());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    t.gamma.push_back(preds[i].embedding.gamma);
    if (embeddings) t.E.row(static_cast<Eigen::Index>(i)) = preds[i].embedding.E.transpose();
  }
  save_predictions(t, out);
  return 0;
}

int cmd_eval(const std::string& truth_path, const std::string& model_path,
             const std::string& pred_path, const std::string& data_path, const std::string& out) {
  const TruthFile truth = load_truth(truth_path);
  json metrics = json::object();
  if (!model_path.empty()) {
    const ModelArtifact model = load_model(model_path);
    metrics["err_B"] = rel_fnorm(model.theta.B, truth.theta0.B);
    metrics["err_Lambda"] = rel_fnorm(model.theta.Lambda, truth.theta0.Lambda);
    metrics["Err"] = err_theta(model.theta, truth.theta0);
  }
  if (!pred_path.empty()) {
    const PredictionTable pred = load_predictions(pred_path);
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < truth.ids.size(); ++i) row_of[truth.ids[i]] = i;
    std::vector<bool> unlabeled(truth.ids.size(), true);
    if (!data_path.empty()) {
      const Dataset data = load_dataset(data_path);
      for (Eigen::Index i = 0; i < data.N(); ++i) {
        const auto it = row_of.find(data.ids[i]);
        if (it != row_of.end()) unlabeled[it->second] = !data.labels[i].has_value();
      }
    }
    std::vector<double> scores;
    std::vector<int> labels;
    Matrix E(static_cast<Eigen::Index>(pred.ids.size()), pred.E.cols());
    Matrix xi(E.rows(), truth.xi_bar.cols());
    for (std::size_t k = 0; k < pred.ids.size(); ++k) {
      const auto it = row_of.find(pred.ids[k]);
      if (it == row_of.end())
        throw Error(ErrorKind::Schema, "prediction id '" + pred.ids[k] + "' not in truth file");
      if (unlabeled[it->second]) {
        scores.push_back(pred.gamma[k]);
        labels.push_back(truth.labels_full[it->second]);
      }
      if (pred.E.cols() > 0) {
        E.row(static_cast<Eigen::Index>(k)) = pred.E.row(static_cast<Eigen::Index>(k));
        xi.row(static_cast<Eigen::Index>(k)) = truth.xi_bar.row(static_cast<Eigen::Index>(it->second));
      }
    }
    if (pred.E.cols() > 0) metrics["cosine"] = cosine_embeddings(E, xi);
    if (!scores.empty()) {
      metrics["n_scored"] = scores.size();
      metrics["brier"] = brier_score(scores, labels);
      const auto pos = std::count(labels.begin(), labels.end(), 1);
      if (pos > 0 && pos < static_cast<long>(labels.size())) {
        metrics["auc"] = auc_score(scores, labels);
        metrics["prauc"] = prauc_score(scores, labels);
      }
    }
  }
  write_text_file(out, metrics.dump(1) + "\n");
  return 0;
}

int cmd_benchmark(const std::string& grid_path, int replications,
                  const std::vector<std::string>& methods, const std::string& out_tsv,
                  const std::string& out_json, const FitOptions& o, const Common& common) {
  json grid;
  try {
    grid = json::parse(read_text_file(grid_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, grid_path + ": invalid JSON: " + e.what());
  }
  if (!grid.is_object() || !grid.contains("cells") || !grid["cells"].is_array())
    throw Error(ErrorKind::Schema, grid_path + ": expected an object with a 'cells' array");
  SimConfig defaults;
  if (grid.contains("defaults")) defaults = sim_config_from_json(grid["defaults"]);
  std::vector<SimConfig> cells;
  for (const auto& c : grid["cells"]) cells.push_back(sim_config_from_json(c, defaults));

  BenchmarkOptions opts;
  opts.sup = o.sup;
  opts.em = o.em;
  opts.em.warm_start = !o.no_warm_start;
  opts.threads = common.threads;
  opts.replications = replications > 0 ? replications : grid.value("replications", 20);
  opts.predictions = grid.value("predictions", true);
  std::vector<std::string> names = methods;
  if (names.empty() && grid.contains("methods")) names = grid["methods"].get<std::vector<std::string>>();
  if (!names.empty()) {
    opts.methods.clear();
    for (const auto& m : names) opts.methods.push_back(parse_method(m));
  }
  const auto results = run_benchmark(cells, opts);
  if (!out_tsv.empty()) {
    std::ostringstream os;
    write_benchmark_tsv(results, os);
    write_text_file(out_tsv, os.str());
  }
  const std::string js = benchmark_to_json(results).dump(1) + "\n";
  if (!out_json.empty())
    write_text_file(out_json, js);
  else if (out_tsv.empty())
    std::cout << js;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised phenotyping and embedding for count data on a fixed embedding basis"};
  app.footer(kExitHelp);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "read options from a TOML/INI file");
  Common common;
  app.add_option("--threads", common.threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SimConfig sim;
  std::string misspec = "none", out_data, out_truth, out_basis;
  auto* simulate = app.add_subcommand("simulate", "generate a dataset with ground truth");
  simulate->add_option("--n", sim.n, "labeled subjects")->capture_default_str();
  simulate->add_option("--N", sim.N, "total subjects")->capture_default_str();
  simulate->add_option("--p", sim.p, "features")->capture_default_str();
  simulate->add_option("--q", sim.q, "embedding dimension")->capture_default_str();
  simulate->add_option("--misspec", misspec, "none | weak | strong")->capture_default_str();
  simulate->add_option("--zero-inflation", sim.zero_inflation, "zero-inflation probability")
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "base seed")->capture_default_str();
  simulate->add_option("--out-data", out_data, "dataset CSV")->required();
  simulate->add_option("--out-truth", out_truth, "ground-truth JSON");
  simulate->add_option("--out-basis", out_basis, "basis CSV");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "estimate model parameters");
  fit->add_option("--data", fo.data, "dataset CSV")->required();
  fit->add_option("--basis", fo.basis, "basis CSV (p x q)")->required();
  fit->add_option("--mode", fo.mode, "sup | unsup | semisup")
      ->check(CLI::IsMember({"sup", "unsup", "semisup"}))
      ->capture_default_str();
  fit->add_option("--out-model", fo.out_model, "model JSON")->required();
  fit->add_option("--out-report", fo.out_report, "fit report JSON");
  fit->add_option("--truth", fo.truth, "ground truth JSON, enables the Err trace");
  add_fit_controls(fit, fo);

  std::string model_path, basis_path, data_path, out_path;
  auto* predict = app.add_subcommand("predict", "phenotype probabilities per subject");
  auto* embed = app.add_subcommand("embed", "phenotype probabilities and embeddings per subject");
  for (auto* cmd : {predict, embed}) {
    cmd->add_option("--model", model_path, "model JSON")->required();
    cmd->add_option("--basis", basis_path, "basis CSV")->required();
    cmd->add_option("--data", data_path, "subjects CSV")->required();
    cmd->add_option("--out", out_path, "output CSV")->required();
    cmd->add_option("--gva-max-iters", fo.sup.gva.max_iters, "per-subject GVA iteration cap")
        ->capture_default_str();
    cmd->add_option("--gva-tol", fo.sup.gva.tol, "per-subject GVA relative tolerance")
        ->capture_default_str();
    cmd->add_option("--gamma-floor", fo.em.gamma_floor, "probability clamp")->capture_default_str();
  }

  std::string truth_path, pred_path;
  auto* eval = app.add_subcommand("eval", "compare a model and/or predictions against truth");
  eval->add_option("--truth", truth_path, "ground-truth JSON")->required();
  eval->add_option("--model", model_path, "model JSON");
  eval->add_option("--predictions", pred_path, "predict/embed output CSV");
  eval->add_option("--data", data_path, "dataset CSV; classification is scored on its unlabeled rows");
  eval->add_option("--out", out_path, "metrics JSON")->required();

  std::string grid_path, out_tsv, out_json;
  int replications = 0;
  std::vector<std::string> methods;
  auto* bench = app.add_subcommand("benchmark", "simulate, fit and score a grid of configurations");
  bench->add_option("--grid", grid_path, "grid JSON: {\"defaults\":{...},\"cells\":[{...}]}")
      ->required();
  bench->add_option("--replications", replications, "replications per cell (overrides grid)");
  bench->add_option("--methods", methods, "subset of sup unsup semisup");
  bench->add_option("--out-tsv", out_tsv, "delimited table");
  bench->add_option("--out-json", out_json, "JSON summary");
  add_fit_controls(bench, fo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kExitUsage);
  }

  try {
    if (*simulate) {
      sim.misspec = parse_misspec(misspec);
      return cmd_simulate(sim, out_data, out_truth, out_basis, common);
    }
    if (*fit) return cmd_fit(fo, common);
    if (*predict) return cmd_predict(model_path, basis_path, data_path, out_path, false, fo, common);
    if (*embed) return cmd_predict(model_path, basis_path, data_path, out_path, true, fo, common);
    if (*eval) return cmd_eval(truth_path, model_path, pred_path, data_path, out_path);
    if (*bench)
      return cmd_benchmark(grid_path, replications, methods, out_tsv, out_json, fo, common);
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitInternal);
  }
  return kExitInternal;
}

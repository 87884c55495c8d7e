#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "score/benchmark.hpp"
#include "score/simulator.hpp"
#include "score/types.hpp"

namespace score {

inline constexpr int kModelFormatVersion = 1;

// Dataset text format: header `id,u1..ur[,y],x1..xp`, one subject per row,
// empty y cell for unlabeled subjects, counts as nonnegative integers.
Dataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void write_dataset(const Dataset& data, std::ostream& out);
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);

// Basis text format: p rows of q comma-separated reals, no header. Loading
// applies orthonormalize_basis.
Matrix read_matrix_csv(std::istream& in, const std::string& source = "<stream>");
void write_matrix_csv(const Matrix& M, std::ostream& out);
EmbeddingBasis load_basis(const std::string& path);
void save_basis(const EmbeddingBasis& V, const std::string& path);

struct ModelArtifact {
  ModelParams theta;
  ConstraintSpec constraints;
  Eigen::Index p = 0;
  nlohmann::json meta = nlohmann::json::object();
};

// JSON with format version, dimensions, constraints, parameters and a
// SHA-256 of the canonical payload.
nlohmann::json model_to_json(const ModelArtifact& model);
ModelArtifact model_from_json(const nlohmann::json& j);
void save_model(const ModelArtifact& model, const std::string& path);
ModelArtifact load_model(const std::string& path);

std::string sha256_hex(const std::string& bytes);

struct TruthFile {
  ModelParams theta0;
  std::vector<std::string> ids;
  Matrix xi_bar;
  Matrix W;
  std::vector<int> labels_full;
  std::vector<int> C;
};

void save_truth(const SimTruth& truth, const std::vector<std::string>& ids, const SimConfig& cfg,
                const std::string& path);
TruthFile load_truth(const std::string& path);

// Per-subject output: `id,gamma[,e1..eq]`.
struct PredictionTable {
  std::vector<std::string> ids;
  std::vector<double> gamma;
  Matrix E;  // N x q, empty when embeddings were not written
};
void save_predictions(const PredictionTable& t, const std::string& path);
PredictionTable load_predictions(const std::string& path);

nlohmann::json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json params_to_json(const ModelParams& theta);
ModelParams params_from_json(const nlohmann::json& j);

nlohmann::json sim_config_to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j, const SimConfig& defaults = {});

// Delimited table (one row per cell x method) and a JSON summary.
void write_benchmark_tsv(const std::vector<BenchmarkResult>& results, std::ostream& out);
nlohmann::json benchmark_to_json(const std::vector<BenchmarkResult>& results);

// Shortest round-trip decimal form.
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace score

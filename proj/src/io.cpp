#include "score/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "score/palm.hpp"

namespace score {

using nlohmann::json;

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string where(const std::string& source, std::size_t row, std::size_t col) {
  std::ostringstream os;
  os << source << ": row " << row << ", column " << col;
  return os.str();
}

double parse_double(const std::string& cell, const std::string& loc) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty() || !std::isfinite(v))
    throw Error(ErrorKind::Schema, loc + ": not a finite number: '" + cell + "'");
  return v;
}

std::int64_t parse_count(const std::string& cell, const std::string& loc) {
  std::int64_t v = 0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw Error(ErrorKind::Schema, loc + ": count is not an integer: '" + cell + "'");
  if (v < 0) throw Error(ErrorKind::Schema, loc + ": negative count " + cell);
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

json json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, path + ": invalid JSON: " + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorKind::Schema, what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, what + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_text_file(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Dataset read_dataset(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, source + ": empty dataset file");
  const auto header = split_row(line);
  if (header.empty() || header[0] != "id")
    throw Error(ErrorKind::Schema, source + ": first header column must be 'id'");
  std::size_t col = 1;
  Eigen::Index r = 0;
  while (col < header.size() && header[col] == "u" + std::to_string(r + 1)) {
    ++r;
    ++col;
  }
  const bool has_y = col < header.size() && header[col] == "y";
  if (has_y) ++col;
  const std::size_t first_x = col;
  Eigen::Index p = 0;
  for (; col < header.size(); ++col) {
    if (header[col] != "x" + std::to_string(p + 1))
      throw Error(ErrorKind::Schema, where(source, 1, col + 1) + ": unexpected header '" +
                                         header[col] + "'");
    ++p;
  }
  if (p == 0) throw Error(ErrorKind::Schema, source + ": no count columns");

  Dataset d;
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::vector<double>> covs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << source << ": row " << row << " has " << cells.size() << " cells, header has "
         << header.size();
      throw Error(ErrorKind::Schema, os.str());
    }
    if (cells[0].empty()) throw Error(ErrorKind::Schema, where(source, row, 1) + ": empty id");
    d.ids.push_back(cells[0]);
    std::vector<double> u(static_cast<std::size_t>(r));
    for (Eigen::Index k = 0; k < r; ++k)
      u[k] = parse_double(cells[1 + k], where(source, row, 2 + k));
    covs.push_back(std::move(u));
    if (has_y) {
      const auto& c = cells[1 + r];
      if (c.empty()) {
        d.labels.push_back(std::nullopt);
      } else if (c == "0" || c == "1") {
        d.labels.push_back(c == "1" ? 1 : 0);
      } else {
        throw Error(ErrorKind::Schema,
                    where(source, row, 2 + r) + ": label must be 0, 1 or empty; got '" + c + "'");
      }
    } else {
      d.labels.push_back(std::nullopt);
    }
    std::vector<std::int64_t> x(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j)
      x[j] = parse_count(cells[first_x + j], where(source, row, first_x + j + 1));
    counts.push_back(std::move(x));
  }
  const auto N = static_cast<Eigen::Index>(counts.size());
  d.X.resize(N, p);
  d.U.resize(N, r);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) d.X(i, j) = counts[i][j];
    for (Eigen::Index k = 0; k < r; ++k) d.U(i, k) = covs[i][k];
  }
  d.validate();
  return d;
}

void write_dataset(const Dataset& data, std::ostream& out) {
  data.validate();
  out << "id";
  for (Eigen::Index k = 0; k < data.r(); ++k) out << ",u" << k + 1;
  out << ",y";
  for (Eigen::Index j = 0; j < data.p(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.N(); ++i) {
    const auto& id = data.ids[i];
    if (id.find_first_of(",\n\r") != std::string::npos)
      throw Error(ErrorKind::Schema, "subject id contains a delimiter: '" + id + "'");
    out << id;
    for (Eigen::Index k = 0; k < data.r(); ++k) out << ',' << format_double(data.U(i, k));
    out << ',';
    if (data.labels[i]) out << *data.labels[i];
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << data.X(i, j);
    out << '\n';
  }
}

Dataset load_dataset(const std::string& path) {
  auto in = open_in(path);
  return read_dataset(in, path);
}

void save_dataset(const Dataset& data, const std::string& path) {
  auto out = open_out(path);
  write_dataset(data, out);
  finish(out, path);
}

Matrix read_matrix_csv(std::istream& in, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    if (!rows.empty() && cells.size() != rows.front().size()) {
      std::ostringstream os;
      os << source << ": row " << row << " has " << cells.size() << " values, expected "
         << rows.front().size();
      throw Error(ErrorKind::Schema, os.str());
    }
    std::vector<double> v(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      v[c] = parse_double(cells[c], where(source, row, c + 1));
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw Error(ErrorKind::Schema, source + ": empty matrix file");
  Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = rows[i][j];
  return M;
}

void write_matrix_csv(const Matrix& M, std::ostream& out) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
}

EmbeddingBasis load_basis(const std::string& path) {
  auto in = open_in(path);
  return orthonormalize_basis(read_matrix_csv(in, path));
}

void save_basis(const EmbeddingBasis& V, const std::string& path) {
  auto out = open_out(path);
  write_matrix_csv(V.V(), out);
  finish(out, path);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Checksum, "SHA-256 computation failed");
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw Error(ErrorKind::Schema, what + ": expected a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(ErrorKind::Dimension, what + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw Error(ErrorKind::Schema, what + ": non-numeric entry");
      M(i, c) = row[c].get<double>();
    }
  }
  return M;
}

json params_to_json(const ModelParams& theta) {
  return json{{"B", matrix_to_json(theta.B)},
              {"Lambda", matrix_to_json(theta.Lambda)},
              {"b", std::vector<double>(theta.b.data(), theta.b.data() + theta.b.size())}};
}

ModelParams params_from_json(const json& j) {
  ModelParams t;
  t.B = matrix_from_json(j.value("B", json()), "B");
  t.Lambda = matrix_from_json(j.value("Lambda", json()), "Lambda");
  const auto b = field<std::vector<double>>(j, "b", "parameters");
  t.b = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  t.validate();
  return t;
}

json model_to_json(const ModelArtifact& model) {
  model.theta.validate();
  json payload{
      {"format", "score-model"},
      {"version", kModelFormatVersion},
      {"dims", {{"p", model.p}, {"q", model.theta.q()}, {"r", model.theta.r()}}},
      {"constraints",
       {{"K_B", model.constraints.K_B},
        {"K_M", model.constraints.K_M},
        {"eta_clip", model.constraints.eta_clip}}},
      {"params", params_to_json(model.theta)},
      {"meta", model.meta},
  };
  json out = payload;
  out["checksum"] = "sha256:" + sha256_hex(payload.dump());
  return out;
}

ModelArtifact model_from_json(const json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "score-model")
    throw Error(ErrorKind::Schema, "not a model artifact");
  const int version = field<int>(j, "version", "model");
  if (version != kModelFormatVersion)
    throw Error(ErrorKind::Version, "model format version " + std::to_string(version) +
                                        " is not supported (expected " +
                                        std::to_string(kModelFormatVersion) + ")");
  json payload = j;
  payload.erase("checksum");
  const auto stored = field<std::string>(j, "checksum", "model");
  if (stored != "sha256:" + sha256_hex(payload.dump()))
    throw Error(ErrorKind::Checksum, "model checksum mismatch");

  ModelArtifact m;
  m.theta = params_from_json(field<json>(j, "params", "model"));
  const json dims = field<json>(j, "dims", "model");
  m.p = field<Eigen::Index>(dims, "p", "dims");
  if (field<Eigen::Index>(dims, "q", "dims") != m.theta.q() ||
      field<Eigen::Index>(dims, "r", "dims") != m.theta.r() || m.p <= m.theta.q())
    throw Error(ErrorKind::Dimension, "model dims disagree with stored parameters");
  const json c = field<json>(j, "constraints", "model");
  m.constraints.K_B = field<double>(c, "K_B", "constraints");
  m.constraints.K_M = field<double>(c, "K_M", "constraints");
  m.constraints.eta_clip = field<double>(c, "eta_clip", "constraints");
  m.constraints.validate();
  m.meta = j.value("meta", json::object());
  return m;
}

void save_model(const ModelArtifact& model, const std::string& path) {
  write_text_file(path, model_to_json(model).dump(1) + "\n");
}

ModelArtifact load_model(const std::string& path) { return model_from_json(json_file(path)); }

json sim_config_to_json(const SimConfig& c) {
  return json{{"n", c.n},
              {"N", c.N},
              {"p", c.p},
              {"q", c.q},
              {"misspec", to_string(c.misspec)},
              {"zero_inflation", c.zero_inflation},
              {"seed", c.seed}};
}

SimConfig sim_config_from_json(const json& j, const SimConfig& defaults) {
  if (!j.is_object()) throw Error(ErrorKind::Schema, "simulation config must be an object");
  SimConfig c = defaults;
  try {
    c.n = j.value("n", c.n);
    c.N = j.value("N", c.N);
    c.p = j.value("p", c.p);
    c.q = j.value("q", c.q);
    c.misspec = parse_misspec(j.value("misspec", std::string(to_string(c.misspec))));
    c.zero_inflation = j.value("zero_inflation", c.zero_inflation);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("simulation config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_truth(const SimTruth& truth, const std::vector<std::string>& ids, const SimConfig& cfg,
                const std::string& path) {
  json j{{"format", "score-truth"},
         {"config", sim_config_to_json(cfg)},
         {"theta0", params_to_json(truth.theta0)},
         {"ids", ids},
         {"xi_bar", matrix_to_json(truth.xi_bar)},
         {"W", matrix_to_json(truth.W)},
         {"labels_full", truth.labels_full},
         {"C", truth.C}};
  write_text_file(path, j.dump() + "\n");
}

TruthFile load_truth(const std::string& path) {
  const json j = json_file(path);
  if (j.value("format", std::string()) != "score-truth")
    throw Error(ErrorKind::Schema, path + ": not a truth file");
  TruthFile t;
  t.theta0 = params_from_json(field<json>(j, "theta0", path));
  t.ids = field<std::vector<std::string>>(j, "ids", path);
  t.xi_bar = matrix_from_json(j.at("xi_bar"), "xi_bar");
  t.W = matrix_from_json(j.at("W"), "W");
  t.labels_full = field<std::vector<int>>(j, "labels_full", path);
  t.C = j.value("C", std::vector<int>{});
  if (t.ids.size() != t.labels_full.size() ||
      t.xi_bar.rows() != static_cast<Eigen::Index>(t.ids.size()))
    throw Error(ErrorKind::Dimension, path + ": truth arrays disagree in length");
  return t;
}

void save_predictions(const PredictionTable& t, const std::string& path) {
  auto out = open_out(path);
  out << "id,gamma";
  for (Eigen::Index k = 0; k < t.E.cols(); ++k) out << ",e" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    out << t.ids[i] << ',' << format_double(t.gamma[i]);
    for (Eigen::Index k = 0; k < t.E.cols(); ++k)
      out << ',' << format_double(t.E(static_cast<Eigen::Index>(i), k));
    out << '\n';
  }
  finish(out, path);
}

PredictionTable load_predictions(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, path + ": empty predictions file");
  const auto header = split_row(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "gamma")
    throw Error(ErrorKind::Schema, path + ": header must start with id,gamma");
  const auto q = static_cast<Eigen::Index>(header.size() - 2);
  PredictionTable t;
  std::vector<std::vector<double>> E;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::Schema, path + ": ragged row " + std::to_string(row));
    t.ids.push_back(cells[0]);
    t.gamma.push_back(parse_double(cells[1], where(path, row, 2)));
    std::vector<double> e(static_cast<std::size_t>(q));
    for (Eigen::Index k = 0; k < q; ++k) e[k] = parse_double(cells[2 + k], where(path, row, 3 + k));
    E.push_back(std::move(e));
  }
  t.E.resize(static_cast<Eigen::Index>(E.size()), q);
  for (Eigen::Index i = 0; i < t.E.rows(); ++i)
    for (Eigen::Index k = 0; k < q; ++k) t.E(i, k) = E[i][k];
  return t;
}

void write_benchmark_tsv(const std::vector<BenchmarkResult>& results, std::ostream& out) {
  static const char* kMetrics[] = {"err_B", "err_Lambda", "Err", "cosine", "auc", "prauc", "brier"};
  out << "n\tN\tp\tq\tmisspec\tzero_inflation\tmethod\treplications\tfailures";
  for (const char* m : kMetrics) out << '\t' << m << "_mean\t" << m << "_sd";
  out << '\n';
  for (const auto& r : results) {
    const auto& c = r.config;
    out << c.n << '\t' << c.N << '\t' << c.p << '\t' << c.q << '\t' << to_string(c.misspec) << '\t'
        << format_double(c.zero_inflation) << '\t' << to_string(r.method) << '\t'
        << r.replications << '\t' << r.failures;
    for (const char* m : kMetrics) {
      const auto it = r.metrics.find(m);
      if (it == r.metrics.end() || it->second.values.empty())
        out << "\tNA\tNA";
      else
        out << '\t' << format_double(it->second.mean) << '\t' << format_double(it->second.sd);
    }
    out << '\n';
  }
}

json benchmark_to_json(const std::vector<BenchmarkResult>& results) {
  json cells = json::array();
  for (const auto& r : results) {
    json metrics = json::object();
    for (const auto& [name, m] : r.metrics)
      metrics[name] = {{"mean", m.mean}, {"sd", m.sd}, {"values", m.values}};
    cells.push_back({{"config", sim_config_to_json(r.config)},
                     {"method", to_string(r.method)},
                     {"replications", r.replications},
                     {"failures", r.failures},
                     {"failure_messages", r.failure_messages},
                     {"metrics", metrics},
                     {"err_traces", r.err_traces}});
  }
  return json{{"format", "score-benchmark"}, {"results", cells}};
}

}  // namespace score

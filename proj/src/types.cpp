#include "score/types.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace score {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Rank: return "rank";
    case ErrorKind::Decomposition: return "decomposition";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::DegenerateLabels: return "degenerate_labels";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Initialization: return "initialization";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Version: return "version";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Io: return "io";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

EmbeddingBasis::EmbeddingBasis(Matrix V) : V_(std::move(V)) {
  V2_ = V_.array().square().matrix();
  V4_ = V2_.array().square().matrix();
}

EmbeddingBasis EmbeddingBasis::from_normalized(Matrix V) {
  const auto p = V.rows();
  const auto q = V.cols();
  if (q < 1 || q > p) {
    std::ostringstream os;
    os << "basis must satisfy 1 <= q <= p, got p=" << p << " q=" << q;
    throw Error(ErrorKind::Dimension, os.str());
  }
  if (!V.allFinite()) throw Error(ErrorKind::Numeric, "basis has non-finite entries");
  const double scale = static_cast<double>(q) / static_cast<double>(p);
  const double dev =
      (scale * V.transpose() * V - Matrix::Identity(q, q)).cwiseAbs().maxCoeff();
  if (dev > 1e-10) {
    std::ostringstream os;
    os << "basis violates (q/p) V'V = I, max deviation " << dev;
    throw Error(ErrorKind::Rank, os.str());
  }
  return EmbeddingBasis(std::move(V));
}

double EmbeddingBasis::incoherence() const {
  return V_.rowwise().norm().maxCoeff();
}

double EmbeddingBasis::log_ratio_rate() const {
  return std::sqrt(std::log(static_cast<double>(p()) / static_cast<double>(q())));
}

void ModelParams::validate() const {
  const auto q = B.rows();
  if (B.cols() < 2 || Lambda.rows() != q || Lambda.cols() != q ||
      b.size() != B.cols() - 1) {
    std::ostringstream os;
    os << "model shapes inconsistent: B " << B.rows() << "x" << B.cols() << ", Lambda "
       << Lambda.rows() << "x" << Lambda.cols() << ", b " << b.size();
    throw Error(ErrorKind::Dimension, os.str());
  }
  if (!B.allFinite() || !Lambda.allFinite() || !b.allFinite())
    throw Error(ErrorKind::Numeric, "model parameters contain non-finite entries");
  if ((Lambda - Lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorKind::Decomposition, "Lambda is not symmetric");
  Eigen::LLT<Matrix> llt(Lambda);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Decomposition, "Lambda is not positive definite");
}

Vector augment(const Eigen::Ref<const Vector>& u) {
  Vector out(u.size() + 1);
  out(0) = 1.0;
  out.tail(u.size()) = u;
  return out;
}

Vector augment(const Eigen::Ref<const Vector>& u, double y) {
  Vector out(u.size() + 2);
  out(0) = 1.0;
  out.segment(1, u.size()) = u;
  out(u.size() + 1) = y;
  return out;
}

std::size_t Dataset::labeled_count() const {
  std::size_t n = 0;
  for (const auto& l : labels) n += l.has_value();
  return n;
}

std::vector<std::size_t> Dataset::labeled_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::unlabeled_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!labels[i]) out.push_back(i);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), p());
  out.U.resize(static_cast<Eigen::Index>(rows.size()), r());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(i);
    out.U.row(static_cast<Eigen::Index>(k)) = U.row(i);
    out.ids.push_back(ids.empty() ? std::to_string(rows[k]) : ids[rows[k]]);
    out.labels.push_back(labels[rows[k]]);
  }
  return out;
}

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(N());
  if (U.rows() != N() || labels.size() != n || (!ids.empty() && ids.size() != n)) {
    std::ostringstream os;
    os << "dataset row counts disagree: X " << N() << ", U " << U.rows() << ", labels "
       << labels.size() << ", ids " << ids.size();
    throw Error(ErrorKind::Dimension, os.str());
  }
  if (N() > 0 && X.minCoeff() < 0) throw Error(ErrorKind::Schema, "negative count in X");
  if (!U.allFinite()) throw Error(ErrorKind::Schema, "non-finite covariate in U");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] && *labels[i] != 0 && *labels[i] != 1) {
      std::ostringstream os;
      os << "label of subject " << i << " is " << *labels[i] << ", expected 0 or 1";
      throw Error(ErrorKind::Schema, os.str());
    }
  }
  if (!ids.empty()) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second) throw Error(ErrorKind::Schema, "duplicate subject id " + id);
  }
}

void ConstraintSpec::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(K_B) || !ok(K_M) || !ok(eta_clip))
    throw Error(ErrorKind::Config, "K_B, K_M and eta_clip must be finite and positive");
}

double ConstraintSpec::spectral_bound(Eigen::Index q) const {
  return K_B * std::sqrt(static_cast<double>(q));
}

double ConstraintSpec::linear_bound(const EmbeddingBasis& V) const {
  return K_B * V.log_ratio_rate();
}

double ConstraintSpec::mean_bound(const EmbeddingBasis& V) const {
  return K_M * V.log_ratio_rate();
}

double expit(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace score

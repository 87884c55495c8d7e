#include "score/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace score {

namespace {

void check_pair(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorKind::Dimension, "scores and labels differ in length");
  if (scores.empty()) throw Error(ErrorKind::InsufficientData, "no scores");
  for (int l : labels)
    if (l != 0 && l != 1) throw Error(ErrorKind::Schema, "labels must be 0 or 1");
}

void check_two_classes(const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size()))
    throw Error(ErrorKind::DegenerateLabels, "AUC/PRAUC undefined for single-class labels");
}

}  // namespace

double err_theta(const ModelParams& theta, const ModelParams& theta0) {
  if (theta.B.rows() != theta0.B.rows() || theta.B.cols() != theta0.B.cols() ||
      theta.Lambda.rows() != theta0.Lambda.rows() || theta.b.size() != theta0.b.size())
    throw Error(ErrorKind::Dimension, "parameter shapes differ");
  const double eB = (theta.B - theta0.B).colwise().norm().maxCoeff();
  Eigen::LLT<Matrix> llt(theta0.Lambda);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Decomposition, "reference Lambda is not positive definite");
  const Vector w = llt.solve(Vector(theta0.label_effect()));
  const double eL = ((theta.Lambda - theta0.Lambda).transpose() * w).norm();
  const double eb = (theta.b - theta0.b).norm();
  return std::max({eB, eL, eb});
}

double rel_fnorm(const Matrix& A, const Matrix& A0) {
  if (A.rows() != A0.rows() || A.cols() != A0.cols())
    throw Error(ErrorKind::Dimension, "rel_fnorm shape mismatch");
  const double ref = A0.norm();
  if (!(ref > 0.0)) throw Error(ErrorKind::Numeric, "rel_fnorm reference has zero norm");
  return (A - A0).norm() / ref;
}

double cosine_embeddings(const Matrix& E_hat, const Matrix& xi_bar) {
  if (E_hat.rows() != xi_bar.rows() || E_hat.cols() != xi_bar.cols())
    throw Error(ErrorKind::Dimension, "embedding shapes differ");
  if (E_hat.rows() == 0) throw Error(ErrorKind::InsufficientData, "no embeddings");
  double total = 0.0;
  for (Eigen::Index i = 0; i < E_hat.rows(); ++i) {
    const double a = E_hat.row(i).norm(), b = xi_bar.row(i).norm();
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::Numeric, "zero-norm embedding row");
    total += E_hat.row(i).dot(xi_bar.row(i)) / (a * b);
  }
  return total / static_cast<double>(E_hat.rows());
}

double brier_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_pair(scores, labels);
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - labels[i];
    s += d * d;
  }
  return s / static_cast<double>(scores.size());
}

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_pair(scores, labels);
  check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks, then U = R_pos - n_pos (n_pos + 1) / 2.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++pos;
      }
    i = j;
  }
  const double np = static_cast<double>(pos), nn = static_cast<double>(n - pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double prauc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_pair(scores, labels);
  check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double total_pos =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<int>& labels) {
  ClassificationMetrics m;
  m.brier = brier_score(scores, labels);
  m.auc = auc_score(scores, labels);
  m.prauc = prauc_score(scores, labels);
  return m;
}

}  // namespace score

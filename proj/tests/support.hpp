#pragma once

// Hand-rolled generators shared by the unit suites.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "score/palm.hpp"
#include "score/types.hpp"

namespace score::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline Matrix gaussian_matrix(Rng& g, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = nd(g);
  return M;
}

inline Vector gaussian_vector(Rng& g, Eigen::Index n, double sd = 1.0) {
  return gaussian_matrix(g, n, 1, sd).col(0);
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Rng& g, Eigen::Index q, double lo, double hi) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(g, q, q));
  Matrix Q = qr.householderQ();
  Vector ev(q);
  for (Eigen::Index k = 0; k < q; ++k) ev(k) = uniform(g, lo, hi);
  Matrix L = Q * ev.asDiagonal() * Q.transpose();
  return 0.5 * (L + L.transpose());
}

inline EmbeddingBasis random_basis(Rng& g, Eigen::Index p, Eigen::Index q) {
  return orthonormalize_basis(gaussian_matrix(g, p, q));
}

inline ModelParams random_theta(Rng& g, Eigen::Index q, Eigen::Index r, double scale = 0.4) {
  ModelParams t;
  t.B = gaussian_matrix(g, q, r + 2, scale);
  t.Lambda = random_spd(g, q, 0.3, 1.5);
  t.b = gaussian_vector(g, r + 1, 0.5);
  return t;
}

inline GvaState random_state(Rng& g, Eigen::Index q, int y) {
  GvaState z;
  z.m = gaussian_vector(g, q, 0.4);
  z.s.resize(q);
  for (Eigen::Index k = 0; k < q; ++k) z.s(k) = uniform(g, 0.05, 1.0);
  z.label = y;
  return z;
}

// Poisson counts drawn at the model's own rates for a random W.
inline Vector random_counts(Rng& g, const ModelParams& t, const EmbeddingBasis& V, const Vector& u,
                            int y) {
  Vector xi = t.B * augment(u, y);
  Eigen::LLT<Matrix> llt(t.Lambda);
  xi += Matrix(llt.matrixL()) * gaussian_vector(g, t.q());
  Vector eta = V.V() * xi;
  Vector x(V.p());
  for (Eigen::Index j = 0; j < V.p(); ++j)
    x(j) = static_cast<double>(std::poisson_distribution<long>(std::exp(std::min(eta(j), 6.0)))(g));
  return x;
}

// Small labeled dataset drawn from t.
inline Dataset random_dataset(Rng& g, const ModelParams& t, const EmbeddingBasis& V, int N,
                              int labeled) {
  Dataset d;
  const Eigen::Index r = t.r();
  d.X.resize(N, V.p());
  d.U = gaussian_matrix(g, N, r, 0.5);
  for (int i = 0; i < N; ++i) {
    Vector u = d.U.row(i).transpose();
    int y = std::bernoulli_distribution(expit(t.b.dot(augment(u))))(g);
    Vector x = random_counts(g, t, V, u, y);
    for (Eigen::Index j = 0; j < V.p(); ++j) d.X(i, j) = static_cast<std::int64_t>(x(j));
    d.ids.push_back("r" + std::to_string(i + 1));
    d.labels.push_back(i < labeled ? std::optional<int>(y) : std::nullopt);
  }
  return d;
}

// Relative error with an absolute floor for near-zero references.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace score::testing

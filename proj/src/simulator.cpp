#include "score/simulator.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "score/parallel.hpp"

namespace score {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(splitmix64(base) ^ (tag * 0xd1b54a32d192ed03ULL));
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(seed ^ splitmix64(stream * 0xa0761d6478bd642fULL + 0x8ebc6af09c88c6e3ULL)) {}

CounterRng::result_type CounterRng::operator()() {
  ++counter_;
  return splitmix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

const char* to_string(Misspec m) {
  switch (m) {
    case Misspec::None: return "none";
    case Misspec::Weak: return "weak";
    case Misspec::Strong: return "strong";
  }
  return "none";
}

Misspec parse_misspec(const std::string& s) {
  if (s == "none") return Misspec::None;
  if (s == "weak") return Misspec::Weak;
  if (s == "strong") return Misspec::Strong;
  throw Error(ErrorKind::Config, "misspec must be none, weak or strong; got '" + s + "'");
}

void SimConfig::validate() const {
  if (p < 2 || q < 1 || q >= p) throw Error(ErrorKind::Config, "need 1 <= q < p");
  if (N < 1 || n < 0 || n > N) throw Error(ErrorKind::Config, "need 0 <= n <= N, N >= 1");
  if (!(zero_inflation >= 0.0 && zero_inflation < 1.0))
    throw Error(ErrorKind::Config, "zero_inflation must lie in [0, 1)");
}

EmbeddingBasis gen_basis(int p, int q) {
  if (p < 2 || q < 1 || q >= p) throw Error(ErrorKind::Dimension, "gen_basis needs 1 <= q < p");
  Matrix S(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) S(i, j) = std::pow(0.5, std::abs(i - j));
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::Decomposition, "AR eigensolver failed");
  // Eigenvalues come out ascending.
  Matrix V(p, q);
  for (int k = 0; k < q; ++k) {
    Vector v = es.eigenvectors().col(p - 1 - k);
    for (int j = 0; j < p; ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    V.col(k) = v;
  }
  V *= std::sqrt(static_cast<double>(p) / q);
  return EmbeddingBasis::from_normalized(std::move(V));
}

ModelParams sim_theta0(int q) {
  ModelParams t;
  t.B = Matrix::Zero(q, 3);
  t.B.col(1).setConstant(0.2);
  t.B.col(2).setConstant(0.8);
  t.Lambda.resize(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) t.Lambda(i, j) = 4.0 * std::pow(0.1, std::abs(i - j));
  t.b = Vector(2);
  t.b << -0.2, 0.5;
  return t;
}

SimData gen_dataset(const SimConfig& cfg, int threads) {
  cfg.validate();
  return gen_dataset(cfg, sim_theta0(cfg.q), threads);
}

SimData gen_dataset(const SimConfig& cfg, ModelParams theta0, int threads) {
  cfg.validate();
  const int N = cfg.N, p = cfg.p, q = cfg.q;
  theta0.validate();
  if (theta0.q() != q || theta0.r() != 1 || theta0.b.size() != 2)
    throw Error(ErrorKind::Dimension, "generating parameters must have q rows and r = 1");
  EmbeddingBasis V = gen_basis(p, q);
  const Matrix L = theta0.Lambda.llt().matrixL();
  const double c_coef = cfg.misspec == Misspec::Weak ? 0.2 : cfg.misspec == Misspec::Strong ? 0.6 : 0.0;

  Dataset data;
  data.ids.resize(N);
  data.X.resize(N, p);
  data.U.resize(N, 1);
  data.labels.assign(N, std::nullopt);
  Matrix W(N, q), xi(N, q);
  std::vector<int> Y(N), C(cfg.misspec == Misspec::None ? 0 : N);
  // First failure per subject, reported in subject order.
  std::vector<std::string> overflow(N);

  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t i, int) {
    CounterRng rng(cfg.seed, i + 1);
    std::poisson_distribution<int> pois2(2.0);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    const double u = pois2(rng);
    const int y = unif(rng) < expit(theta0.b(0) + theta0.b(1) * u) ? 1 : 0;
    int c = 0;
    if (cfg.misspec != Misspec::None) c = unif(rng) < 0.4 ? 1 : 0;
    Vector z(q);
    for (int k = 0; k < q; ++k) z(k) = normal(rng);
    const Vector w = L * z;
    Vector ubar(3);
    ubar << 1.0, u, static_cast<double>(y);
    const Vector xb = theta0.B * ubar + w;
    Vector latent = xb;
    if (c) latent.array() += c_coef;
    const Vector Z = V.V() * latent;
    for (int j = 0; j < p; ++j) {
      const double rate = std::exp(Z(j));
      if (!(rate <= 1e12)) {
        if (overflow[i].empty()) {
          std::ostringstream os;
          os << "Poisson rate overflow at subject " << i << ", feature " << j << " (log-rate "
             << Z(j) << ")";
          overflow[i] = os.str();
        }
        data.X(i, j) = 0;
        continue;
      }
      bool zeroed = false;
      if (cfg.zero_inflation > 0.0) zeroed = unif(rng) < cfg.zero_inflation;
      std::poisson_distribution<std::int64_t> pois(rate);
      const std::int64_t draw = pois(rng);
      data.X(i, j) = zeroed ? 0 : draw;
    }
    data.U(i, 0) = u;
    data.ids[i] = "s" + std::to_string(i + 1);
    W.row(i) = w.transpose();
    xi.row(i) = xb.transpose();
    Y[i] = y;
    if (!C.empty()) C[i] = c;
  });
  for (const auto& msg : overflow)
    if (!msg.empty()) throw Error(ErrorKind::Generation, msg);

  // Uniform size-n subset by a partial Fisher-Yates shuffle.
  CounterRng mask_rng(cfg.seed, 0);
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < cfg.n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, N - 1);
    std::swap(idx[k], idx[pick(mask_rng)]);
    data.labels[idx[k]] = Y[idx[k]];
  }

  SimData out{std::move(data),
              SimTruth{std::move(theta0), std::move(V), std::move(W), std::move(xi), std::move(Y),
                       std::move(C)}};
  return out;
}

}  // namespace score

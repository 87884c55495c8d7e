#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "score/types.hpp"

namespace score {

// Counter-based generator: output k of stream s under key `seed` is
// splitmix64(seed ^ mix(s) + (k + 1) * golden). Streams are independent
// and addressable, so subject i can be generated without touching i - 1.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t z);
// Child seed for a named purpose, used to derive per-replication seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

enum class Misspec { None, Weak, Strong };
const char* to_string(Misspec m);
Misspec parse_misspec(const std::string& s);

struct SimConfig {
  int n = 50;
  int N = 5000;
  int p = 400;
  int q = 20;
  Misspec misspec = Misspec::None;
  double zero_inflation = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimTruth {
  ModelParams theta0;
  EmbeddingBasis V;
  Matrix W;                 // N x q
  Matrix xi_bar;            // N x q, B0 Ubar_{Y_i} + W_i
  std::vector<int> labels_full;
  std::vector<int> C;       // misspecification latents, empty when misspec = none
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

// sqrt(p/q) times the top-q eigenvectors of (0.5^|i-j|), each signed so its
// first nonzero entry is positive.
EmbeddingBasis gen_basis(int p, int q);

// Generating parameters for r = 1: B0 = (0, 0.2 1, 0.8 1), Lambda0 =
// 4 (0.1^|i-j|), b0 = (-0.2, 0.5).
ModelParams sim_theta0(int q);

// Subject i draws from stream i + 1, the labeled subset from stream 0, so
// the output does not depend on `threads`.
SimData gen_dataset(const SimConfig& cfg, int threads = 1);
// Same draws under other generating parameters (q x 3 B, r = 1).
SimData gen_dataset(const SimConfig& cfg, ModelParams theta0, int threads = 1);

}  // namespace score

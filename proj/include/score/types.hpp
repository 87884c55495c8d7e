#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace score {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountMatrix =
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  Schema,
  Dimension,
  Rank,
  Decomposition,
  Numeric,
  DegenerateLabels,
  InsufficientData,
  Initialization,
  Unsupported,
  Version,
  Checksum,
  Io,
  Generation,
  Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// p x q loading matrix whose columns satisfy (q/p) V'V = I. q = p is
// accepted for hand-sized instances; both box constraints then have radius 0.
// Construct through orthonormalize_basis() or from_normalized().
class EmbeddingBasis {
 public:
  // Validates the normalization invariant to 1e-10; throws Dimension/Rank.
  static EmbeddingBasis from_normalized(Matrix V);

  const Matrix& V() const { return V_; }
  // Elementwise squares and fourth powers, cached for the ELBO kernels.
  const Matrix& squared() const { return V2_; }
  const Matrix& fourth() const { return V4_; }
  Eigen::Index p() const { return V_.rows(); }
  Eigen::Index q() const { return V_.cols(); }
  // C_V = max_j ||V_j||_2
  double incoherence() const;
  // sqrt(log(p/q)), the rate shared by both box constraints.
  double log_ratio_rate() const;

 private:
  explicit EmbeddingBasis(Matrix V);
  Matrix V_;
  Matrix V2_;
  Matrix V4_;
};

// theta = {B, Lambda, b}. B columns: intercept, r covariates, label effect.
struct ModelParams {
  Matrix B;       // q x (r+2)
  Matrix Lambda;  // q x q, SPD
  Vector b;       // r+1

  Eigen::Index q() const { return B.rows(); }
  Eigen::Index r() const { return B.cols() - 2; }
  auto intercept() const { return B.col(0); }
  auto covariate_block() const { return B.middleCols(1, r()); }
  auto label_effect() const { return B.col(B.cols() - 1); }

  // Throws Dimension on shape mismatch, Numeric on non-finite entries and
  // Decomposition when Lambda is asymmetric or not positive definite.
  void validate() const;
};

// Ubar = (1, u')'
Vector augment(const Eigen::Ref<const Vector>& u);
// Ubar_y = (1, u', y)'
Vector augment(const Eigen::Ref<const Vector>& u, double y);

struct Dataset {
  std::vector<std::string> ids;
  CountMatrix X;  // N x p
  Matrix U;       // N x r
  std::vector<std::optional<int>> labels;

  Eigen::Index N() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index r() const { return U.cols(); }
  std::size_t labeled_count() const;
  std::vector<std::size_t> labeled_indices() const;
  std::vector<std::size_t> unlabeled_indices() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  // Counts of the i-th subject as doubles.
  Vector counts(std::size_t i) const { return X.row(i).cast<double>().transpose(); }
  Vector covariates(std::size_t i) const { return U.row(i).transpose(); }

  void validate() const;
};

struct GvaState {
  Vector m;
  Vector s;  // diagonal of S, strictly positive
  int label = 0;
};

struct ConstraintSpec {
  double K_B = 10.0;
  double K_M = 10.0;
  double eta_clip = 30.0;

  void validate() const;
  // K_B sqrt(q)
  double spectral_bound(Eigen::Index q) const;
  // K_B sqrt(log(p/q))
  double linear_bound(const EmbeddingBasis& V) const;
  // K_M sqrt(log(p/q))
  double mean_bound(const EmbeddingBasis& V) const;
};

double expit(double v);

}  // namespace score

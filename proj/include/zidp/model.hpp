#ifndef ZIDP_MODEL_HPP
#define ZIDP_MODEL_HPP

// Domain types of the zero-inflated DP mixture and per-subject likelihoods.
//
// Each subject i carries (y_i, a_i, l_i) with z_i = 1 iff y_i is zero. A
// cluster's parameters omega = (beta, phi, gamma, eta, theta) govern
//
//   y | a, l  ~  expit(x'gamma) delta_0 + (1 - expit(x'gamma)) N(x'beta, phi)
//   a | l     ~  Ber(expit(m'eta))
//   l         ~  prod_k p(l_k | theta_k)
//
// with x = (1, a, enc(l)) and m = (1, enc(l)). enc() one-hot encodes
// categorical covariates against their first level.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace zidp {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class CovariateKind { continuous, binary, categorical };

const char* to_string(CovariateKind kind) noexcept;

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  int levels = 0;  // categorical only, >= 2

  // Number of design columns this covariate expands to.
  int encoded_width() const noexcept {
    return kind == CovariateKind::categorical ? levels - 1 : 1;
  }
};

// Ordered covariate list. The order fixes column order everywhere downstream.
class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<CovariateSpec> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const CovariateSpec& operator[](std::size_t k) const { return entries_[k]; }
  std::span<const CovariateSpec> entries() const noexcept { return entries_; }

  // p: width of the encoded covariate block.
  int encoded_width() const noexcept { return encoded_width_; }
  int outcome_dim() const noexcept { return encoded_width_ + 2; }    // |beta|, |gamma|
  int treatment_dim() const noexcept { return encoded_width_ + 1; }  // |eta|

  // -1 when absent.
  int index_of(std::string_view name) const noexcept;

  bool operator==(const CovariateSchema& other) const;

 private:
  std::vector<CovariateSpec> entries_;
  int encoded_width_ = 0;
};

// Throws Error(schema) unless value is admissible for the covariate.
void check_covariate_value(const CovariateSpec& spec, double value);

// Writes enc(l) into out (length p). l_row holds raw values; categorical
// entries are level indices.
void encode_covariates(const CovariateSchema& schema, std::span<const double> l_row,
                       std::span<double> out);

struct DesignVectors {
  Vector x;  // (1, a, enc(l)), length p + 2
  Vector m;  // (1, enc(l)), length p + 1
};

DesignVectors design_vectors(const CovariateSchema& schema, int a, std::span<const double> l_row);

// Immutable observed data. Derived design rows are cached at construction.
class Dataset {
 public:
  Dataset(CovariateSchema schema, std::vector<double> y, std::vector<int> a, RowMatrix l,
          double zero_epsilon = 0.0);

  std::size_t size() const noexcept { return y_.size(); }
  const CovariateSchema& schema() const noexcept { return schema_; }
  double zero_epsilon() const noexcept { return zero_epsilon_; }

  double y(std::size_t i) const { return y_[i]; }
  int a(std::size_t i) const { return a_[i]; }
  int z(std::size_t i) const { return z_[i]; }

  const std::vector<double>& y() const noexcept { return y_; }
  const std::vector<int>& a() const noexcept { return a_; }
  const std::vector<int>& z() const noexcept { return z_; }

  // Raw covariate row (length q = schema().size()).
  std::span<const double> l(std::size_t i) const {
    return {l_.data() + i * l_.cols(), static_cast<std::size_t>(l_.cols())};
  }
  const RowMatrix& l() const noexcept { return l_; }

  // Outcome design row x_i (length p + 2).
  std::span<const double> x(std::size_t i) const {
    return {x_.data() + i * x_.cols(), static_cast<std::size_t>(x_.cols())};
  }
  const RowMatrix& x() const noexcept { return x_; }

  // Returns a copy restricted to the given subjects, in order.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  CovariateSchema schema_;
  std::vector<double> y_;
  std::vector<int> a_;
  std::vector<int> z_;
  RowMatrix l_;
  RowMatrix x_;
  double zero_epsilon_ = 0.0;
};

struct ContinuousParam {
  double mean = 0.0;
  double variance = 1.0;
};
struct BinaryParam {
  double prob = 0.5;
};
struct CategoricalParam {
  std::vector<double> probs;
};
using CovariateParam = std::variant<ContinuousParam, BinaryParam, CategoricalParam>;
using CovariateParams = std::vector<CovariateParam>;

struct ClusterParams {
  Vector beta;   // p + 2
  double phi = 1.0;
  Vector gamma;  // p + 2
  Vector eta;    // p + 1
  CovariateParams theta;

  // Throws Error(schema) on dimension or range violations.
  void validate(const CovariateSchema& schema) const;
};

double expit(double t) noexcept;

// log[(pi)^z ((1 - pi) N(y | x'beta, phi))^(1 - z)] with pi = expit(x'gamma).
double loglik_outcome_only(const Dataset& data, std::size_t i, const ClusterParams& w);
double loglik_treatment(const Dataset& data, std::size_t i, const ClusterParams& w);
double loglik_covariates(const CovariateSchema& schema, std::span<const double> l_row,
                         const CovariateParams& theta);
// Sum of the outcome, treatment and covariate factors.
double loglik_subject(const Dataset& data, std::size_t i, const ClusterParams& w);

// Precomputed log-constants for repeated evaluation against many subjects.
// Holds a copy of the parameters; cheap to rebuild after every update.
class ClusterDensity {
 public:
  ClusterDensity() = default;
  ClusterDensity(const CovariateSchema& schema, const ClusterParams& w);

  double outcome(const Dataset& data, std::size_t i) const noexcept;
  double treatment(const Dataset& data, std::size_t i) const noexcept;
  double covariates(std::span<const double> l_row) const noexcept;
  double subject(const Dataset& data, std::size_t i) const noexcept {
    return outcome(data, i) + treatment(data, i) + covariates(data.l(i));
  }

  // Linear predictors against an arbitrary encoded row.
  double treatment_logit(std::span<const double> x_row) const noexcept;

 private:
  struct Term {
    CovariateKind kind;
    double a = 0.0;  // continuous: mean;       binary: log p
    double b = 0.0;  // continuous: 1/variance; binary: log(1-p)
    double c = 0.0;  // continuous: log-normalizer
    std::size_t offset = 0;  // categorical: first slot in log_probs_
  };
  Vector beta_;
  Vector gamma_;
  Vector eta_;
  double inv_phi_ = 1.0;
  double log_norm_phi_ = 0.0;
  std::vector<Term> terms_;
  std::vector<double> log_probs_;
};

// Numerically stable log(expit(t)).
inline double log_expit(double t) noexcept {
  // log(1 / (1 + e^{-t})) = -softplus(-t)
  return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

}  // namespace zidp

#endif  // ZIDP_MODEL_HPP

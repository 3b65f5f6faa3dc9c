#ifndef ZIDP_PRIOR_HPP
#define ZIDP_PRIOR_HPP

#include <variant>
#include <vector>

#include "zidp/model.hpp"
#include "zidp/random.hpp"

namespace zidp {

// Independent Gaussian per coefficient.
struct GaussianPrior {
  Vector mean;
  Vector variance;
};

// Density ∝ x^{-shape-1} exp(-rate / x).
struct InverseGammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct ContinuousCovariatePrior {
  double mean0 = 0.0;  // Gaussian hyperprior on the mean
  double var0 = 1.0;
  InverseGammaPrior variance;
};
struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};
struct DirichletPrior {
  std::vector<double> concentration;
};
using CovariatePrior = std::variant<ContinuousCovariatePrior, BetaPrior, DirichletPrior>;

// G0: product of independent priors over (beta, phi, gamma, eta, theta).
struct BasePrior {
  GaussianPrior beta;  // diagonal covariance
  InverseGammaPrior phi;
  GaussianPrior gamma;
  GaussianPrior eta;
  std::vector<CovariatePrior> covariates;

  void validate(const CovariateSchema& schema) const;
};

// Concentration parameter alpha: fixed, or Gamma / inverse-Gamma prior
// updated by random-walk Metropolis on log(alpha).
struct ConcentrationSpec {
  enum class Mode { fixed, gamma_prior, inverse_gamma_prior };

  Mode mode = Mode::gamma_prior;
  double alpha = 1.0;  // fixed value
  double shape = 1.0;
  double rate = 1.0;
  double jump_sd = 1.0;

  static ConcentrationSpec fixed(double alpha);
  static ConcentrationSpec gamma(double shape = 1.0, double rate = 1.0, double jump_sd = 1.0);
  static ConcentrationSpec inverse_gamma(double shape = 1.0, double rate = 1.0, double jump_sd = 1.0);

  void validate() const;
  // Starting value: fixed alpha or the prior mean (mode when the mean is infinite).
  double initial_value() const;
  // log prior density of alpha up to a constant; 0 in fixed mode.
  double log_prior(double alpha) const;
};

// Knobs of the empirically calibrated preset.
struct CalibrationOptions {
  double beta_cov_scale = 100.0;     // multiplies the OLS covariance diagonal
  double logistic_prior_var = 2.0;   // gamma, eta ~ N(0, var)
  double phi_shape = 2.0;            // phi ~ IG(shape, (shape - 1) s^2)
  double covariate_mean_var_scale = 100.0;  // (10 sd)^2: hyper-variance of covariate means
  double covariate_var_shape = 10.0;       // covariate variance ~ IG(shape, rate_factor s^2)
  double covariate_var_rate_factor = 10.0;
  double beta_a = 1.0;
  double beta_b = 1.0;
  double dirichlet_concentration = 1.0;
};

// Least-squares fit of y on x over subjects with z = 0.
struct OlsFit {
  Vector coef;
  Vector coef_variance;  // diagonal of s^2 (X'X)^{-1}
  double residual_variance = 1.0;
  std::size_t n_used = 0;
};
OlsFit ols_positive(const Dataset& data);

// Prior centred on the data: beta ~ N(OLS, scale * diag cov), logistic
// blocks N(0, 2), covariate hyperpriors from sample moments.
BasePrior empirical_prior(const Dataset& data, const CalibrationOptions& opts = {});

// omega ~ G0.
ClusterParams draw_from_prior(const BasePrior& prior, const CovariateSchema& schema, Random& rng);

// theta ~ prior over covariate parameters only.
CovariateParams draw_covariate_params(const BasePrior& prior, const CovariateSchema& schema,
                                      Random& rng);

// l ~ p(l | theta); writes raw covariate values into out (length q).
void draw_covariates(const CovariateSchema& schema, const CovariateParams& theta, Random& rng,
                     std::span<double> out);

}  // namespace zidp

#endif  // ZIDP_PRIOR_HPP

#include "zidp/prior.hpp"

#include <cmath>
#include <limits>

#include "zidp/error.hpp"

namespace zidp {

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

void check_gaussian(const GaussianPrior& g, int dim, const char* name) {
  if (g.mean.size() != dim || g.variance.size() != dim)
    throw config_error(std::string(name) + " prior has wrong dimension");
  if (!g.mean.allFinite()) throw config_error(std::string(name) + " prior mean is not finite");
  for (int k = 0; k < dim; ++k)
    if (!positive(g.variance[k])) throw config_error(std::string(name) + " prior variance must be positive");
}

}  // namespace

void BasePrior::validate(const CovariateSchema& schema) const {
  check_gaussian(beta, schema.outcome_dim(), "beta");
  check_gaussian(gamma, schema.outcome_dim(), "gamma");
  check_gaussian(eta, schema.treatment_dim(), "eta");
  if (!positive(phi.shape) || !positive(phi.rate)) throw config_error("phi prior must have positive shape and rate");
  if (covariates.size() != schema.size()) throw config_error("covariate prior count does not match schema");
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& spec = schema[k];
    const auto& cp = covariates[k];
    bool ok = false;
    switch (spec.kind) {
      case CovariateKind::continuous:
        if (const auto* c = std::get_if<ContinuousCovariatePrior>(&cp))
          ok = std::isfinite(c->mean0) && positive(c->var0) && positive(c->variance.shape) &&
               positive(c->variance.rate);
        break;
      case CovariateKind::binary:
        if (const auto* b = std::get_if<BetaPrior>(&cp)) ok = positive(b->a) && positive(b->b);
        break;
      case CovariateKind::categorical:
        if (const auto* d = std::get_if<DirichletPrior>(&cp)) {
          ok = d->concentration.size() == static_cast<std::size_t>(spec.levels);
          for (double c : d->concentration) ok = ok && positive(c);
        }
        break;
    }
    if (!ok) throw config_error("invalid prior for covariate '" + spec.name + "'");
  }
}

ConcentrationSpec ConcentrationSpec::fixed(double alpha) {
  ConcentrationSpec c;
  c.mode = Mode::fixed;
  c.alpha = alpha;
  return c;
}

ConcentrationSpec ConcentrationSpec::gamma(double shape, double rate, double jump_sd) {
  ConcentrationSpec c;
  c.mode = Mode::gamma_prior;
  c.shape = shape;
  c.rate = rate;
  c.jump_sd = jump_sd;
  return c;
}

ConcentrationSpec ConcentrationSpec::inverse_gamma(double shape, double rate, double jump_sd) {
  ConcentrationSpec c = gamma(shape, rate, jump_sd);
  c.mode = Mode::inverse_gamma_prior;
  return c;
}

void ConcentrationSpec::validate() const {
  if (mode == Mode::fixed) {
    if (!positive(alpha)) throw config_error("fixed alpha must be positive");
    return;
  }
  if (!positive(shape) || !positive(rate) || !positive(jump_sd))
    throw config_error("alpha prior shape, rate and jump sd must be positive");
}

double ConcentrationSpec::initial_value() const {
  switch (mode) {
    case Mode::fixed: return alpha;
    case Mode::gamma_prior: return shape / rate;
    case Mode::inverse_gamma_prior: return shape > 1.0 ? rate / (shape - 1.0) : rate / (shape + 1.0);
  }
  return 1.0;
}

double ConcentrationSpec::log_prior(double a) const {
  switch (mode) {
    case Mode::fixed: return 0.0;
    case Mode::gamma_prior: return (shape - 1.0) * std::log(a) - rate * a;
    case Mode::inverse_gamma_prior: return (-shape - 1.0) * std::log(a) - rate / a;
  }
  return 0.0;
}

OlsFit ols_positive(const Dataset& data) {
  const int d = data.schema().outcome_dim();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(d, d);
  Vector xty = Vector::Zero(d);
  double yty = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.z(i) == 1) continue;
    Eigen::Map<const Vector> x(data.x(i).data(), d);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
    xty += x * data.y(i);
    yty += data.y(i) * data.y(i);
    ++used;
  }
  xtx = xtx.selfadjointView<Eigen::Lower>();
  OlsFit fit;
  fit.n_used = used;
  if (used == 0) {
    fit.coef = Vector::Zero(d);
    fit.coef_variance = Vector::Ones(d);
    fit.residual_variance = 1.0;
    return fit;
  }
  // Tiny ridge keeps degenerate columns (e.g. a level never seen among
  // positive outcomes) solvable.
  const double ridge = 1e-10 * std::max(1.0, xtx.trace() / d);
  Eigen::MatrixXd reg = xtx + ridge * Eigen::MatrixXd::Identity(d, d);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  fit.coef = ldlt.solve(xty);
  double ssr = yty - 2.0 * fit.coef.dot(xty) + fit.coef.dot(xtx * fit.coef);
  ssr = std::max(ssr, 0.0);
  const double dof = used > static_cast<std::size_t>(d) ? static_cast<double>(used - d) : 1.0;
  fit.residual_variance = ssr / dof;
  if (!(fit.residual_variance > 0.0)) {
    const double mean = xty[0] / static_cast<double>(used);
    fit.residual_variance = std::max(yty / used - mean * mean, 1.0);
  }
  Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
  fit.coef_variance = fit.residual_variance * inv.diagonal();
  return fit;
}

BasePrior empirical_prior(const Dataset& data, const CalibrationOptions& opts) {
  const auto& schema = data.schema();
  const int d = schema.outcome_dim();
  const OlsFit fit = ols_positive(data);

  BasePrior prior;
  prior.beta.mean = fit.coef;
  prior.beta.variance = opts.beta_cov_scale * fit.coef_variance;
  // Floor for columns the positive-outcome fit cannot inform.
  const double fallback = opts.beta_cov_scale * fit.residual_variance;
  for (int k = 0; k < d; ++k) {
    double& v = prior.beta.variance[k];
    if (!std::isfinite(v) || v <= 0.0 || v > 1e6 * fallback) v = fallback;
  }
  prior.phi.shape = opts.phi_shape;
  prior.phi.rate = (opts.phi_shape > 1.0 ? opts.phi_shape - 1.0 : 1.0) * fit.residual_variance;
  prior.gamma.mean = Vector::Zero(d);
  prior.gamma.variance = Vector::Constant(d, opts.logistic_prior_var);
  prior.eta.mean = Vector::Zero(schema.treatment_dim());
  prior.eta.variance = Vector::Constant(schema.treatment_dim(), opts.logistic_prior_var);

  const double n = static_cast<double>(data.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& spec = schema[k];
    switch (spec.kind) {
      case CovariateKind::continuous: {
        double s = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double v = data.l(i)[k];
          s += v;
          ss += v * v;
        }
        const double mean = s / n;
        double var = data.size() > 1 ? (ss - n * mean * mean) / (n - 1.0) : 1.0;
        if (!(var > 0.0)) var = 1.0;
        ContinuousCovariatePrior c;
        c.mean0 = mean;
        c.var0 = opts.covariate_mean_var_scale * var;
        c.variance = {opts.covariate_var_shape, opts.covariate_var_rate_factor * var};
        prior.covariates.emplace_back(c);
        break;
      }
      case CovariateKind::binary:
        prior.covariates.emplace_back(BetaPrior{opts.beta_a, opts.beta_b});
        break;
      case CovariateKind::categorical:
        prior.covariates.emplace_back(DirichletPrior{
            std::vector<double>(static_cast<std::size_t>(spec.levels), opts.dirichlet_concentration)});
        break;
    }
  }
  prior.validate(schema);
  return prior;
}

CovariateParams draw_covariate_params(const BasePrior& prior, const CovariateSchema& schema,
                                      Random& rng) {
  CovariateParams theta;
  theta.reserve(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    const auto& cp = prior.covariates[k];
    switch (schema[k].kind) {
      case CovariateKind::continuous: {
        const auto& c = std::get<ContinuousCovariatePrior>(cp);
        ContinuousParam out;
        out.mean = rng.normal(c.mean0, std::sqrt(c.var0));
        out.variance = rng.inverse_gamma(c.variance.shape, c.variance.rate);
        theta.emplace_back(out);
        break;
      }
      case CovariateKind::binary: {
        const auto& b = std::get<BetaPrior>(cp);
        theta.emplace_back(BinaryParam{rng.beta(b.a, b.b)});
        break;
      }
      case CovariateKind::categorical: {
        const auto& d = std::get<DirichletPrior>(cp);
        theta.emplace_back(CategoricalParam{rng.dirichlet(d.concentration)});
        break;
      }
    }
  }
  return theta;
}

ClusterParams draw_from_prior(const BasePrior& prior, const CovariateSchema& schema, Random& rng) {
  ClusterParams w;
  const auto gauss = [&rng](const GaussianPrior& g) {
    Vector v(g.mean.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.normal(g.mean[k], std::sqrt(g.variance[k]));
    return v;
  };
  w.beta = gauss(prior.beta);
  w.phi = rng.inverse_gamma(prior.phi.shape, prior.phi.rate);
  w.gamma = gauss(prior.gamma);
  w.eta = gauss(prior.eta);
  w.theta = draw_covariate_params(prior, schema, rng);
  return w;
}

void draw_covariates(const CovariateSchema& schema, const CovariateParams& theta, Random& rng,
                     std::span<double> out) {
  for (std::size_t k = 0; k < schema.size(); ++k) {
    switch (schema[k].kind) {
      case CovariateKind::continuous: {
        const auto& c = std::get<ContinuousParam>(theta[k]);
        out[k] = rng.normal(c.mean, std::sqrt(c.variance));
        break;
      }
      case CovariateKind::binary:
        out[k] = rng.bernoulli(std::get<BinaryParam>(theta[k]).prob) ? 1.0 : 0.0;
        break;
      case CovariateKind::categorical: {
        const auto& probs = std::get<CategoricalParam>(theta[k]).probs;
        double u = rng.uniform();
        std::size_t level = probs.size() - 1;
        for (std::size_t j = 0; j < probs.size(); ++j) {
          u -= probs[j];
          if (u < 0.0) {
            level = j;
            break;
          }
        }
        out[k] = static_cast<double>(level);
        break;
      }
    }
  }
}

}  // namespace zidp

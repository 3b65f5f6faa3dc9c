#ifndef ZIDP_CAUSAL_HPP
#define ZIDP_CAUSAL_HPP

// Standardization over the posterior predictive of a fitted trace.
//
// For a posterior draw with concentration alpha and subject parameters
// omega_1..omega_n, the predictive mean under intervention a is
//
//   alpha/(alpha+n) E_G0[(1 - pi(x_a'gamma)) x_a'beta]
//     + 1/(alpha+n) sum_j (1 - pi(x_a'gamma_j)) x_a'beta_j,
//
// with x_a = (1, a, enc(l~)) and l~ drawn from the matching covariate model.
// Both arms share the same l~ draws. The G0 expectation is a Monte Carlo
// average over n_prior_mc fresh base-measure draws.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "zidp/model.hpp"
#include "zidp/prior.hpp"
#include "zidp/random.hpp"
#include "zidp/sampler.hpp"

namespace zidp {

struct StandardizationConfig {
  std::size_t n_prior_mc = 30;
  std::vector<double> quantiles{0.5};
  // Predictive outcome draws per arm per posterior draw.
  std::size_t predictive_per_draw = 1;
  // Use observed covariates l_j in the subject sum instead of l~ ~ p(l | theta_j).
  bool plug_in_covariates = false;
  // Interval for the effect from predictive-draw differences instead of
  // per-draw standardized mean differences.
  bool predictive_intervals = false;
  double interval_level = 0.95;
  std::size_t threads = 1;
  std::uint64_t seed = 1;

  // Throws Error(config).
  void validate() const;
};

// Per-draw standardized quantities for a = 0 and a = 1.
struct StandardizedDraw {
  std::array<double, 2> mean{};
  std::array<double, 2> zero_prob{};
};

// Subject-level view of one posterior draw: occupied clusters with their
// member counts.
class DrawView {
 public:
  DrawView(const ClusterState& state, const CovariateSchema& schema);

  double alpha() const noexcept { return alpha_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t num_clusters() const noexcept { return params_.size(); }
  const ClusterParams& params(std::size_t k) const { return *params_[k]; }
  const ClusterDensity& density(std::size_t k) const { return densities_[k]; }
  std::size_t count(std::size_t k) const { return counts_[k]; }
  // Cluster of a uniformly chosen subject.
  std::size_t sample_cluster(Random& rng) const;

 private:
  double alpha_;
  std::size_t n_;
  std::vector<const ClusterParams*> params_;
  std::vector<ClusterDensity> densities_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> cumulative_;
};

// data supplies observed covariates for plug-in mode and may otherwise be
// null. Members of each cluster are visited in label order.
StandardizedDraw standardized_mean_draw(const ClusterState& state, const CovariateSchema& schema,
                                        const BasePrior& prior, const StandardizationConfig& cfg, Random& rng,
                                        const Dataset* data = nullptr);

// One draw from the posterior predictive of (Y~^0, Y~^1) sharing the
// component and confounder draw.
std::array<double, 2> predictive_outcome_pair(const DrawView& view, const CovariateSchema& schema,
                                              const BasePrior& prior, Random& rng);

// Single-arm draw.
double predictive_outcome_draw(const DrawView& view, const CovariateSchema& schema, const BasePrior& prior,
                               int a, Random& rng);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct QuantileEffect {
  double q = 0.5;
  double value0 = 0.0;
  double value1 = 0.0;
  double effect = 0.0;
};

struct ConsistencyCheck {
  double standardized = 0.0;  // mean over draws of the standardized mean
  double predictive = 0.0;    // mean of predictive draws
  double se = 0.0;            // MC standard error of the difference
};

struct CausalResults {
  std::vector<double> mean0, mean1;       // per draw
  std::vector<double> zero0, zero1;       // per draw zero probabilities
  std::vector<double> pred0, pred1;       // pooled predictive draws
  double psi = 0.0;
  Interval psi_interval;
  Interval mean0_interval, mean1_interval;
  std::vector<QuantileEffect> quantile_effects;
  double median_effect = 0.0;
  double risk_ratio = 0.0;          // ratio of mean zero probabilities
  double risk_ratio_mean = 0.0;     // mean of per-draw ratios
  Interval risk_ratio_interval;
  std::array<ConsistencyCheck, 2> consistency;
};

CausalResults estimate_effects(const PosteriorTrace& trace, const BasePrior& prior,
                               const StandardizationConfig& cfg, const Dataset* data = nullptr);

// Lower nearest-rank quantile: the ceil(q N)-th smallest value.
double empirical_quantile(std::span<const double> sorted, double q);
// Fraction of values <= v.
double empirical_cdf(std::span<const double> sorted, double v);
// Equal-tailed interval of the given level.
Interval equal_tailed(std::vector<double> values, double level);

struct PropensityResult {
  std::vector<double> score;  // posterior mean P(A~ = 1 | L~ = l_i, D)
  std::vector<double> mc_se;
  std::vector<int> arm;       // observed treatment
};

PropensityResult propensity_scores(const PosteriorTrace& trace, const Dataset& data, const BasePrior& prior,
                                   const StandardizationConfig& cfg);

// q = .02, .04, ..., .98.
std::vector<double> qq_levels();

struct QQTable {
  std::vector<double> levels;
  std::vector<double> observed;
  std::vector<std::vector<double>> replicates;  // one percentile vector per replicate
  std::vector<double> mean;                     // per-level mean across replicates
};

// Replicate datasets of size n from the fitted predictive, treatment drawn
// from the treatment model.
QQTable predictive_qq(const PosteriorTrace& trace, const Dataset& data, const BasePrior& prior,
                      std::size_t replicates, const StandardizationConfig& cfg);

}  // namespace zidp

#endif  // ZIDP_CAUSAL_HPP

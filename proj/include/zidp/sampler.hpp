#ifndef ZIDP_SAMPLER_HPP
#define ZIDP_SAMPLER_HPP

// Metropolis-in-Gibbs posterior sampler for the zero-inflated DP mixture.
//
// One sweep:
//   1. for every occupied cluster k: beta | phi, phi | beta (conjugate, z = 0
//      members only), theta (conjugate), eta and gamma (random-walk
//      Metropolis over all members);
//   2. reassign each subject in turn using auxiliary fresh clusters from G0
//      (existing cluster k: n_{-i,k} p(D_i | w_k); each of m auxiliaries:
//      alpha / m p(D_i | w_aux));
//   3. Metropolis update of log(alpha) given the number of clusters.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "zidp/model.hpp"
#include "zidp/prior.hpp"
#include "zidp/random.hpp"

namespace zidp {

struct SamplerConfig {
  std::size_t iterations = 2000;
  std::size_t burn_in = 1000;
  std::size_t init_clusters = 5;
  std::size_t thin = 1;
  double jump_sd_gamma = 0.15811388300841897;  // sqrt(0.025)
  double jump_sd_eta = 0.15811388300841897;
  std::size_t aux_clusters = 1;
  // One G0 proposal shared across the reassignment sweep (redrawn once
  // taken) instead of fresh auxiliaries for every subject.
  bool per_sweep_proposal = false;
  // Start clusters at the prior means of beta, gamma and eta.
  bool empirical_init = false;
  // Hold gamma and eta at their prior means in every cluster.
  bool freeze_logistic = false;
  // Replace every data factor by a constant: the sweep then samples the
  // Chinese restaurant process prior over partitions.
  bool constant_likelihood = false;
  std::uint64_t seed = 1;

  std::size_t retained_draws() const noexcept {
    return iterations > burn_in ? (iterations - burn_in) / thin : 0;
  }
  // Throws Error(config).
  void validate(std::size_t n_subjects) const;
};

using ClusterId = std::uint64_t;

struct Cluster {
  ClusterParams params;
  std::size_t count = 0;
};

struct ClusterState {
  std::vector<ClusterId> labels;          // c_1..c_n
  std::map<ClusterId, Cluster> clusters;  // occupied clusters only
  double alpha = 1.0;
  ClusterId next_id = 0;  // ids are never reused within a chain

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_clusters() const noexcept { return clusters.size(); }
  const ClusterParams& params_of(std::size_t i) const { return clusters.at(labels[i]).params; }

  // Throws Error(usage) when labels, counts and clusters disagree.
  void check_invariants() const;
};

struct AcceptanceStats {
  std::uint64_t gamma_proposed = 0, gamma_accepted = 0;
  std::uint64_t eta_proposed = 0, eta_accepted = 0;
  std::uint64_t alpha_proposed = 0, alpha_accepted = 0;

  static double rate(std::uint64_t acc, std::uint64_t prop) noexcept {
    return prop == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(prop);
  }
  double gamma_rate() const noexcept { return rate(gamma_accepted, gamma_proposed); }
  double eta_rate() const noexcept { return rate(eta_accepted, eta_proposed); }
  double alpha_rate() const noexcept { return rate(alpha_accepted, alpha_proposed); }
  AcceptanceStats& operator+=(const AcceptanceStats& o) noexcept;
};

struct TraceDraw {
  std::size_t iteration = 0;
  ClusterState state;
};

struct PosteriorTrace {
  CovariateSchema schema;
  std::vector<TraceDraw> draws;
  AcceptanceStats acceptance;
  SamplerConfig config;

  bool empty() const noexcept { return draws.empty(); }
  std::size_t size() const noexcept { return draws.size(); }
  std::size_t n_subjects() const noexcept { return draws.empty() ? 0 : draws.front().state.size(); }
};

// Concatenates chains over the same subjects; throws Error(usage) otherwise.
PosteriorTrace merge_traces(std::span<const PosteriorTrace> chains);

ClusterState initialize(const Dataset& data, const BasePrior& prior, const ConcentrationSpec& conc,
                        const SamplerConfig& cfg, Random& rng);

struct BetaPhi {
  Vector beta;
  double phi;
};
// Conjugate draw of beta | phi followed by phi | beta using the z = 0 members;
// prior draws when there are none.
BetaPhi update_beta_phi(const Dataset& data, std::span<const std::size_t> members,
                        const BasePrior& prior, double current_phi, Random& rng);

CovariateParams update_theta(const Dataset& data, std::span<const std::size_t> members,
                             const BasePrior& prior, const CovariateParams& current, Random& rng);

struct LogisticStep {
  Vector coef;
  bool accepted = false;
};
// One random-walk Metropolis step for a Bernoulli-logistic regression with
// independent Gaussian prior. design has one row per target.
LogisticStep update_logistic_block(std::span<const int> targets, const RowMatrix& design,
                                   const GaussianPrior& prior, const Vector& current, double jump_sd,
                                   Random& rng);
// Unnormalized log posterior used by the step above.
double logistic_log_posterior(std::span<const int> targets, const RowMatrix& design,
                              const GaussianPrior& prior, const Vector& coef);

// Parameter block of one sweep: updates every occupied cluster in place.
void update_cluster_params(ClusterState& state, const Dataset& data, const BasePrior& prior,
                           const SamplerConfig& cfg, Random& rng, AcceptanceStats& stats);

// Reassignment block of one sweep.
void update_assignments(ClusterState& state, const Dataset& data, const BasePrior& prior,
                        const SamplerConfig& cfg, Random& rng);

// Metropolis step on log(alpha) targeting prior(alpha) alpha^K Gamma(alpha) / Gamma(alpha + n).
double update_alpha(const ClusterState& state, const ConcentrationSpec& conc, Random& rng,
                    bool* accepted = nullptr);
double alpha_log_target(double alpha, std::size_t k, std::size_t n, const ConcentrationSpec& conc);

PosteriorTrace run_sampler(const Dataset& data, const BasePrior& prior, const ConcentrationSpec& conc,
                           const SamplerConfig& cfg);

}  // namespace zidp

#endif  // ZIDP_SAMPLER_HPP

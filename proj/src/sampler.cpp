#include "zidp/sampler.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "zidp/error.hpp"

namespace zidp {

namespace {

Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }

double softplus(double t) noexcept { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

ClusterParams fresh_params(const BasePrior& prior, const CovariateSchema& schema, const SamplerConfig& cfg,
                           Random& rng) {
  ClusterParams w = draw_from_prior(prior, schema, rng);
  if (cfg.freeze_logistic) {
    w.gamma = prior.gamma.mean;
    w.eta = prior.eta.mean;
  }
  return w;
}

// Treatment targets over members with design (1, l).
void treatment_design(const Dataset& data, std::span<const std::size_t> mem, std::vector<int>& targets,
                      RowMatrix& design) {
  const int d = data.schema().outcome_dim();
  targets.resize(mem.size());
  design.resize(static_cast<Eigen::Index>(mem.size()), data.schema().treatment_dim());
  for (std::size_t r = 0; r < mem.size(); ++r) {
    const auto x = data.x(mem[r]);
    design(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (int k = 2; k < d; ++k) design(static_cast<Eigen::Index>(r), k - 1) = x[static_cast<std::size_t>(k)];
    targets[r] = data.a(mem[r]);
  }
}

// Zero targets over members with design (1, a, l).
void zero_design(const Dataset& data, std::span<const std::size_t> mem, std::vector<int>& targets,
                 RowMatrix& design) {
  const int d = data.schema().outcome_dim();
  targets.resize(mem.size());
  design.resize(static_cast<Eigen::Index>(mem.size()), d);
  for (std::size_t r = 0; r < mem.size(); ++r) {
    const auto x = data.x(mem[r]);
    for (int k = 0; k < d; ++k) design(static_cast<Eigen::Index>(r), k) = x[static_cast<std::size_t>(k)];
    targets[r] = data.z(mem[r]);
  }
}

}  // namespace

void SamplerConfig::validate(std::size_t n_subjects) const {
  if (iterations <= burn_in) throw config_error("iterations must exceed burn_in");
  if (thin < 1) throw config_error("thin must be at least 1");
  if (init_clusters < 1) throw config_error("init_clusters must be at least 1");
  if (init_clusters > n_subjects)
    throw config_error("init_clusters (" + std::to_string(init_clusters) + ") exceeds the number of subjects (" +
                       std::to_string(n_subjects) + ")");
  if (aux_clusters < 1) throw config_error("aux_clusters must be at least 1");
  if (!(jump_sd_gamma > 0.0) || !(jump_sd_eta > 0.0)) throw config_error("jump sds must be positive");
}

void ClusterState::check_invariants() const {
  std::map<ClusterId, std::size_t> counts;
  for (ClusterId c : labels) ++counts[c];
  if (counts.size() != clusters.size()) throw Error(ErrorKind::usage, "cluster set does not match labels");
  std::size_t total = 0;
  for (const auto& [id, c] : clusters) {
    auto it = counts.find(id);
    if (it == counts.end() || it->second != c.count || c.count == 0)
      throw Error(ErrorKind::usage, "cluster " + std::to_string(id) + " count is inconsistent");
    if (id >= next_id) throw Error(ErrorKind::usage, "cluster id beyond next_id");
    total += c.count;
  }
  if (total != labels.size()) throw Error(ErrorKind::usage, "cluster counts do not sum to n");
}

AcceptanceStats& AcceptanceStats::operator+=(const AcceptanceStats& o) noexcept {
  gamma_proposed += o.gamma_proposed;
  gamma_accepted += o.gamma_accepted;
  eta_proposed += o.eta_proposed;
  eta_accepted += o.eta_accepted;
  alpha_proposed += o.alpha_proposed;
  alpha_accepted += o.alpha_accepted;
  return *this;
}

PosteriorTrace merge_traces(std::span<const PosteriorTrace> chains) {
  if (chains.empty()) throw Error(ErrorKind::usage, "no chains to merge");
  PosteriorTrace out;
  out.schema = chains.front().schema;
  out.config = chains.front().config;
  const std::size_t n = chains.front().n_subjects();
  for (const auto& c : chains) {
    if (!(c.schema == out.schema) || c.n_subjects() != n)
      throw Error(ErrorKind::usage, "chains disagree on schema or subject count");
    out.draws.insert(out.draws.end(), c.draws.begin(), c.draws.end());
    out.acceptance += c.acceptance;
  }
  return out;
}

ClusterState initialize(const Dataset& data, const BasePrior& prior, const ConcentrationSpec& conc,
                        const SamplerConfig& cfg, Random& rng) {
  cfg.validate(data.size());
  const std::size_t k0 = cfg.init_clusters;
  ClusterState state;
  state.labels.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) state.labels[i] = i % k0;
  for (std::size_t k = 0; k < k0; ++k) {
    Cluster c;
    c.params = fresh_params(prior, data.schema(), cfg, rng);
    if (cfg.empirical_init) {
      c.params.beta = prior.beta.mean;
      c.params.gamma = prior.gamma.mean;
      c.params.eta = prior.eta.mean;
    }
    c.count = data.size() / k0 + (k < data.size() % k0 ? 1 : 0);
    state.clusters.emplace(k, std::move(c));
  }
  state.next_id = k0;
  state.alpha = conc.initial_value();
  return state;
}

BetaPhi update_beta_phi(const Dataset& data, std::span<const std::size_t> members, const BasePrior& prior,
                        double current_phi, Random& rng) {
  const int d = data.schema().outcome_dim();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(d, d);
  Vector xty = Vector::Zero(d);
  std::size_t used = 0;
  for (std::size_t i : members) {
    if (data.z(i) == 1) continue;
    Eigen::Map<const Vector> x(data.x(i).data(), d);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
    xty += x * data.y(i);
    ++used;
  }

  BetaPhi out;
  if (used == 0) {
    out.beta.resize(d);
    for (int k = 0; k < d; ++k) out.beta[k] = rng.normal(prior.beta.mean[k], std::sqrt(prior.beta.variance[k]));
    out.phi = rng.inverse_gamma(prior.phi.shape, prior.phi.rate);
    return out;
  }

  // Precision V^{-1} = diag(1/v0) + X'X / phi; mean V (lambda / v0 + X'y / phi).
  Eigen::MatrixXd precision = xtx.selfadjointView<Eigen::Lower>();
  precision /= current_phi;
  Vector rhs = xty / current_phi;
  for (int k = 0; k < d; ++k) {
    precision(k, k) += 1.0 / prior.beta.variance[k];
    rhs[k] += prior.beta.mean[k] / prior.beta.variance[k];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    // Ill-conditioned design: fall back to the prior-only precision.
    precision = prior.beta.variance.cwiseInverse().asDiagonal();
    llt.compute(precision);
  }
  const Vector mean = llt.solve(rhs);
  Vector eps(d);
  for (int k = 0; k < d; ++k) eps[k] = rng.normal();
  // beta = mean + L^{-T} eps has covariance (L L^T)^{-1}.
  out.beta = mean + llt.matrixU().solve(eps);

  double ssr = 0.0;
  for (std::size_t i : members) {
    if (data.z(i) == 1) continue;
    Eigen::Map<const Vector> x(data.x(i).data(), d);
    const double r = data.y(i) - x.dot(out.beta);
    ssr += r * r;
  }
  out.phi = rng.inverse_gamma(prior.phi.shape + 0.5 * static_cast<double>(used), prior.phi.rate + 0.5 * ssr);
  return out;
}

CovariateParams update_theta(const Dataset& data, std::span<const std::size_t> members, const BasePrior& prior,
                             const CovariateParams& current, Random& rng) {
  const auto& schema = data.schema();
  if (members.empty()) return draw_covariate_params(prior, schema, rng);
  const double n = static_cast<double>(members.size());
  CovariateParams theta;
  theta.reserve(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    switch (schema[k].kind) {
      case CovariateKind::continuous: {
        const auto& hp = std::get<ContinuousCovariatePrior>(prior.covariates[k]);
        const double var = std::get<ContinuousParam>(current[k]).variance;
        double s = 0.0;
        for (std::size_t i : members) s += data.l(i)[k];
        const double prec = 1.0 / hp.var0 + n / var;
        const double post_mean = (hp.mean0 / hp.var0 + s / var) / prec;
        ContinuousParam out;
        out.mean = rng.normal(post_mean, std::sqrt(1.0 / prec));
        double ss = 0.0;
        for (std::size_t i : members) {
          const double r = data.l(i)[k] - out.mean;
          ss += r * r;
        }
        out.variance = rng.inverse_gamma(hp.variance.shape + 0.5 * n, hp.variance.rate + 0.5 * ss);
        theta.emplace_back(out);
        break;
      }
      case CovariateKind::binary: {
        const auto& hp = std::get<BetaPrior>(prior.covariates[k]);
        double ones = 0.0;
        for (std::size_t i : members) ones += data.l(i)[k];
        theta.emplace_back(BinaryParam{rng.beta(hp.a + ones, hp.b + n - ones)});
        break;
      }
      case CovariateKind::categorical: {
        const auto& hp = std::get<DirichletPrior>(prior.covariates[k]);
        std::vector<double> conc = hp.concentration;
        for (std::size_t i : members) conc[static_cast<std::size_t>(data.l(i)[k])] += 1.0;
        theta.emplace_back(CategoricalParam{rng.dirichlet(conc)});
        break;
      }
    }
  }
  return theta;
}

double logistic_log_posterior(std::span<const int> targets, const RowMatrix& design, const GaussianPrior& prior,
                              const Vector& coef) {
  double lp = 0.0;
  const Vector lin = design * coef;
  for (Eigen::Index r = 0; r < lin.size(); ++r) {
    const double t = lin[r];
    lp += (targets[static_cast<std::size_t>(r)] == 1 ? t : 0.0) - softplus(t);
  }
  for (Eigen::Index k = 0; k < coef.size(); ++k) {
    const double d = coef[k] - prior.mean[k];
    lp -= 0.5 * d * d / prior.variance[k];
  }
  return lp;
}

LogisticStep update_logistic_block(std::span<const int> targets, const RowMatrix& design, const GaussianPrior& prior,
                                   const Vector& current, double jump_sd, Random& rng) {
  Vector proposal(current.size());
  for (Eigen::Index k = 0; k < current.size(); ++k) proposal[k] = current[k] + jump_sd * rng.normal();
  const double delta = logistic_log_posterior(targets, design, prior, proposal) -
                       logistic_log_posterior(targets, design, prior, current);
  LogisticStep out;
  if (delta >= 0.0 || std::log(rng.uniform()) < delta) {
    out.coef = std::move(proposal);
    out.accepted = true;
  } else {
    out.coef = current;
  }
  return out;
}

void update_cluster_params(ClusterState& state, const Dataset& data, const BasePrior& prior,
                           const SamplerConfig& cfg, Random& rng, AcceptanceStats& stats) {
  const auto& schema = data.schema();
  std::unordered_map<ClusterId, std::vector<std::size_t>> members;
  members.reserve(state.clusters.size());
  for (std::size_t i = 0; i < data.size(); ++i) members[state.labels[i]].push_back(i);

  std::vector<int> targets;
  RowMatrix design;
  for (auto& [id, cluster] : state.clusters) {
    const auto& mem = members[id];
    ClusterParams& w = cluster.params;
    if (cfg.constant_likelihood) {
      w = fresh_params(prior, schema, cfg, rng);
      continue;
    }
    BetaPhi bp = update_beta_phi(data, mem, prior, w.phi, rng);
    w.beta = std::move(bp.beta);
    w.phi = bp.phi;
    w.theta = update_theta(data, mem, prior, w.theta, rng);
    if (cfg.freeze_logistic) continue;

    treatment_design(data, mem, targets, design);
    LogisticStep eta = update_logistic_block(targets, design, prior.eta, w.eta, cfg.jump_sd_eta, rng);
    ++stats.eta_proposed;
    stats.eta_accepted += eta.accepted ? 1 : 0;
    w.eta = std::move(eta.coef);

    zero_design(data, mem, targets, design);
    LogisticStep gamma = update_logistic_block(targets, design, prior.gamma, w.gamma, cfg.jump_sd_gamma, rng);
    ++stats.gamma_proposed;
    stats.gamma_accepted += gamma.accepted ? 1 : 0;
    w.gamma = std::move(gamma.coef);
  }
}

namespace {

struct Slot {
  ClusterId id;
  ClusterParams params;
  ClusterDensity density;
  std::size_t count;
  bool live;
};

}  // namespace

void update_assignments(ClusterState& state, const Dataset& data, const BasePrior& prior, const SamplerConfig& cfg,
                        Random& rng) {
  const auto& schema = data.schema();
  const std::size_t n = data.size();
  const bool flat = cfg.constant_likelihood;

  std::vector<Slot> slots;
  slots.reserve(state.clusters.size() + 8);
  std::unordered_map<ClusterId, std::size_t> slot_index;
  for (auto& [id, c] : state.clusters) {
    slot_index[id] = slots.size();
    ClusterDensity dens = flat ? ClusterDensity() : ClusterDensity(schema, c.params);
    slots.push_back(Slot{id, std::move(c.params), std::move(dens), c.count, true});
  }
  std::vector<std::size_t> slot_of(n);
  for (std::size_t i = 0; i < n; ++i) slot_of[i] = slot_index.at(state.labels[i]);

  const std::size_t m = cfg.aux_clusters;
  const double log_alpha = std::log(state.alpha);
  const double log_alpha_aux = log_alpha - std::log(static_cast<double>(m));

  std::vector<double> logw;
  std::vector<std::size_t> cand;
  std::vector<ClusterParams> aux(m);
  std::vector<ClusterDensity> aux_dens(m);
  bool have_proposal = false;
  ClusterParams proposal;
  ClusterDensity proposal_dens;

  auto make_density = [&](const ClusterParams& w) { return flat ? ClusterDensity() : ClusterDensity(schema, w); };
  auto loglik = [&](const ClusterDensity& dens, std::size_t i) { return flat ? 0.0 : dens.subject(data, i); };

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = slot_of[i];
    --slots[s].count;
    const bool singleton = slots[s].count == 0;

    logw.clear();
    cand.clear();
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const Slot& slot = slots[k];
      if (!slot.live || slot.count == 0) continue;
      logw.push_back(std::log(static_cast<double>(slot.count)) + loglik(slot.density, i));
      cand.push_back(k);
    }
    const std::size_t n_existing = cand.size();

    if (cfg.per_sweep_proposal) {
      if (singleton) slots[s].live = false;
      if (!have_proposal) {
        proposal = fresh_params(prior, schema, cfg, rng);
        proposal_dens = make_density(proposal);
        have_proposal = true;
      }
      logw.push_back(log_alpha + loglik(proposal_dens, i));
    } else {
      // A singleton's own parameters stand in for the first auxiliary, which
      // keeps the reassignment kernel reversible.
      for (std::size_t j = 0; j < m; ++j) {
        if (j == 0 && singleton) {
          logw.push_back(log_alpha_aux + loglik(slots[s].density, i));
          continue;
        }
        aux[j] = fresh_params(prior, schema, cfg, rng);
        aux_dens[j] = make_density(aux[j]);
        logw.push_back(log_alpha_aux + loglik(aux_dens[j], i));
      }
    }

    const std::size_t choice = rng.categorical_log(logw);
    if (choice < n_existing) {
      const std::size_t k = cand[choice];
      ++slots[k].count;
      slot_of[i] = k;
      if (singleton) slots[s].live = false;
      continue;
    }
    const std::size_t j = choice - n_existing;
    if (cfg.per_sweep_proposal) {
      slot_of[i] = slots.size();
      slots.push_back(Slot{state.next_id++, std::move(proposal), std::move(proposal_dens), 1, true});
      have_proposal = false;
    } else if (j == 0 && singleton) {
      slots[s].count = 1;
    } else {
      if (singleton) slots[s].live = false;
      slot_of[i] = slots.size();
      slots.push_back(Slot{state.next_id++, std::move(aux[j]), std::move(aux_dens[j]), 1, true});
    }
  }

  state.clusters.clear();
  for (auto& slot : slots) {
    if (slot.live && slot.count > 0) state.clusters.emplace(slot.id, Cluster{std::move(slot.params), slot.count});
  }
  for (std::size_t i = 0; i < n; ++i) state.labels[i] = slots[slot_of[i]].id;
}

double alpha_log_target(double alpha, std::size_t k, std::size_t n, const ConcentrationSpec& conc) {
  // Includes the log-scale Jacobian (+ log alpha).
  return conc.log_prior(alpha) + static_cast<double>(k) * std::log(alpha) + std::lgamma(alpha) -
         std::lgamma(alpha + static_cast<double>(n)) + std::log(alpha);
}

double update_alpha(const ClusterState& state, const ConcentrationSpec& conc, Random& rng, bool* accepted) {
  if (accepted) *accepted = false;
  if (conc.mode == ConcentrationSpec::Mode::fixed) return conc.alpha;
  const double current = state.alpha;
  const double proposal = std::exp(std::log(current) + conc.jump_sd * rng.normal());
  if (!(proposal > 0.0) || !std::isfinite(proposal)) return current;
  const std::size_t k = state.num_clusters();
  const std::size_t n = state.size();
  const double delta = alpha_log_target(proposal, k, n, conc) - alpha_log_target(current, k, n, conc);
  if (delta >= 0.0 || std::log(rng.uniform()) < delta) {
    if (accepted) *accepted = true;
    return proposal;
  }
  return current;
}

PosteriorTrace run_sampler(const Dataset& data, const BasePrior& prior, const ConcentrationSpec& conc,
                           const SamplerConfig& cfg) {
  cfg.validate(data.size());
  prior.validate(data.schema());
  conc.validate();

  Random rng(derive_seed(cfg.seed, stream::sampler));
  ClusterState state = initialize(data, prior, conc, cfg, rng);

  PosteriorTrace trace;
  trace.schema = data.schema();
  trace.config = cfg;
  trace.draws.reserve(cfg.retained_draws());
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    update_cluster_params(state, data, prior, cfg, rng, trace.acceptance);
    update_assignments(state, data, prior, cfg, rng);
    if (conc.mode != ConcentrationSpec::Mode::fixed) {
      bool acc = false;
      state.alpha = update_alpha(state, conc, rng, &acc);
      ++trace.acceptance.alpha_proposed;
      trace.acceptance.alpha_accepted += acc ? 1 : 0;
    }
    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) trace.draws.push_back(TraceDraw{t, state});
  }
  return trace;
}

}  // namespace zidp

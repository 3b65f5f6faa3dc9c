#include "zidp/causal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "zidp/error.hpp"
#include "zidp/parallel.hpp"

namespace zidp {

namespace {

// coef[0] + a coef[1] + enc' coef[2..]; returns the a = 0 and a = 1 values.
std::array<double, 2> arm_linear(const Vector& coef, std::span<const double> enc) {
  double base = coef[0];
  for (std::size_t k = 0; k < enc.size(); ++k) base += enc[k] * coef[static_cast<Eigen::Index>(k) + 2];
  return {base, base + coef[1]};
}

// Adds (1 - pi) x'beta and pi for both arms at encoded covariates enc.
void add_contribution(const ClusterParams& w, std::span<const double> enc, std::array<double, 2>& mean,
                      std::array<double, 2>& zero) {
  const auto lin_b = arm_linear(w.beta, enc);
  const auto lin_g = arm_linear(w.gamma, enc);
  for (int a = 0; a < 2; ++a) {
    const double pi = expit(lin_g[a]);
    mean[a] += (1.0 - pi) * lin_b[a];
    zero[a] += pi;
  }
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void StandardizationConfig::validate() const {
  if (n_prior_mc < 1) throw Error(ErrorKind::config, "n_prior_mc must be at least 1");
  if (predictive_per_draw < 1) throw Error(ErrorKind::config, "predictive_per_draw must be at least 1");
  for (double q : quantiles)
    if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::config, "quantiles must lie strictly inside (0, 1)");
  if (!(interval_level > 0.0 && interval_level < 1.0))
    throw Error(ErrorKind::config, "interval_level must lie strictly inside (0, 1)");
}

DrawView::DrawView(const ClusterState& state, const CovariateSchema& schema)
    : alpha_(state.alpha), n_(state.size()) {
  params_.reserve(state.clusters.size());
  std::size_t total = 0;
  for (const auto& [id, c] : state.clusters) {
    params_.push_back(&c.params);
    densities_.emplace_back(schema, c.params);
    counts_.push_back(c.count);
    total += c.count;
    cumulative_.push_back(total);
  }
}

std::size_t DrawView::sample_cluster(Random& rng) const {
  const std::size_t j = rng.index(n_);
  return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), j) - cumulative_.begin());
}

StandardizedDraw standardized_mean_draw(const ClusterState& state, const CovariateSchema& schema,
                                        const BasePrior& prior, const StandardizationConfig& cfg, Random& rng,
                                        const Dataset* data) {
  const std::size_t q = schema.size();
  const double n = static_cast<double>(state.size());
  std::vector<double> l(q);
  std::vector<double> enc(static_cast<std::size_t>(schema.encoded_width()));

  std::array<double, 2> sum_mean{}, sum_zero{};
  if (cfg.plug_in_covariates) {
    if (data == nullptr || data->size() != state.size())
      throw Error(ErrorKind::usage, "plug-in standardization needs the fitted data");
    for (std::size_t i = 0; i < state.size(); ++i) {
      encode_covariates(schema, data->l(i), enc);
      add_contribution(state.params_of(i), enc, sum_mean, sum_zero);
    }
  } else {
    for (const auto& [id, c] : state.clusters) {
      for (std::size_t r = 0; r < c.count; ++r) {
        draw_covariates(schema, c.params.theta, rng, l);
        encode_covariates(schema, l, enc);
        add_contribution(c.params, enc, sum_mean, sum_zero);
      }
    }
  }

  std::array<double, 2> g0_mean{}, g0_zero{};
  for (std::size_t m = 0; m < cfg.n_prior_mc; ++m) {
    const ClusterParams w = draw_from_prior(prior, schema, rng);
    draw_covariates(schema, w.theta, rng, l);
    encode_covariates(schema, l, enc);
    add_contribution(w, enc, g0_mean, g0_zero);
  }
  const double mc = static_cast<double>(cfg.n_prior_mc);
  const double alpha = state.alpha;

  StandardizedDraw out;
  for (int a = 0; a < 2; ++a) {
    out.mean[a] = (alpha * g0_mean[a] / mc + sum_mean[a]) / (alpha + n);
    out.zero_prob[a] = (alpha * g0_zero[a] / mc + sum_zero[a]) / (alpha + n);
  }
  return out;
}

std::array<double, 2> predictive_outcome_pair(const DrawView& view, const CovariateSchema& schema,
                                              const BasePrior& prior, Random& rng) {
  const double n = static_cast<double>(view.n());
  ClusterParams fresh;
  const ClusterParams* w = nullptr;
  if (rng.uniform() < view.alpha() / (view.alpha() + n)) {
    fresh = draw_from_prior(prior, schema, rng);
    w = &fresh;
  } else {
    w = &view.params(view.sample_cluster(rng));
  }
  std::vector<double> l(schema.size());
  std::vector<double> enc(static_cast<std::size_t>(schema.encoded_width()));
  draw_covariates(schema, w->theta, rng, l);
  encode_covariates(schema, l, enc);
  const auto lin_b = arm_linear(w->beta, enc);
  const auto lin_g = arm_linear(w->gamma, enc);
  const double sd = std::sqrt(w->phi);
  std::array<double, 2> y{};
  for (int a = 0; a < 2; ++a) {
    const bool zero = rng.bernoulli(expit(lin_g[a]));
    y[a] = zero ? 0.0 : rng.normal(lin_b[a], sd);
  }
  return y;
}

double predictive_outcome_draw(const DrawView& view, const CovariateSchema& schema, const BasePrior& prior,
                               int a, Random& rng) {
  return predictive_outcome_pair(view, schema, prior, rng)[a == 1 ? 1 : 0];
}

double empirical_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::usage, "quantile of an empty sample");
  const double pos = std::ceil(q * static_cast<double>(sorted.size()));
  const std::size_t rank = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(sorted.size())));
  return sorted[rank - 1];
}

double empirical_cdf(std::span<const double> sorted, double v) {
  if (sorted.empty()) return 0.0;
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), v);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

Interval equal_tailed(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  const double tail = 0.5 * (1.0 - level);
  return {empirical_quantile(values, tail), empirical_quantile(values, 1.0 - tail)};
}

CausalResults estimate_effects(const PosteriorTrace& trace, const BasePrior& prior,
                               const StandardizationConfig& cfg, const Dataset* data) {
  cfg.validate();
  if (trace.empty()) throw Error(ErrorKind::usage, "posterior trace is empty");
  const auto& schema = trace.schema;
  const std::size_t t_count = trace.size();
  const std::size_t reps = cfg.predictive_per_draw;

  CausalResults res;
  res.mean0.resize(t_count);
  res.mean1.resize(t_count);
  res.zero0.resize(t_count);
  res.zero1.resize(t_count);
  res.pred0.resize(t_count * reps);
  res.pred1.resize(t_count * reps);

  parallel_for(t_count, cfg.threads, [&](std::size_t t) {
    const ClusterState& state = trace.draws[t].state;
    Random rng(derive_seed(cfg.seed, stream::standardize, t));
    const StandardizedDraw sd = standardized_mean_draw(state, schema, prior, cfg, rng, data);
    res.mean0[t] = sd.mean[0];
    res.mean1[t] = sd.mean[1];
    res.zero0[t] = sd.zero_prob[0];
    res.zero1[t] = sd.zero_prob[1];
    const DrawView view(state, schema);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto y = predictive_outcome_pair(view, schema, prior, rng);
      res.pred0[t * reps + r] = y[0];
      res.pred1[t * reps + r] = y[1];
    }
  });

  std::vector<double> diff(t_count);
  for (std::size_t t = 0; t < t_count; ++t) diff[t] = res.mean1[t] - res.mean0[t];
  res.psi = mean_of(diff);
  if (cfg.predictive_intervals) {
    std::vector<double> pdiff(res.pred0.size());
    for (std::size_t k = 0; k < pdiff.size(); ++k) pdiff[k] = res.pred1[k] - res.pred0[k];
    res.psi_interval = equal_tailed(std::move(pdiff), cfg.interval_level);
  } else {
    res.psi_interval = equal_tailed(diff, cfg.interval_level);
  }
  res.mean0_interval = equal_tailed(res.mean0, cfg.interval_level);
  res.mean1_interval = equal_tailed(res.mean1, cfg.interval_level);

  std::vector<double> s0 = res.pred0, s1 = res.pred1;
  std::sort(s0.begin(), s0.end());
  std::sort(s1.begin(), s1.end());
  for (double q : cfg.quantiles) {
    QuantileEffect qe;
    qe.q = q;
    qe.value0 = empirical_quantile(s0, q);
    qe.value1 = empirical_quantile(s1, q);
    qe.effect = qe.value1 - qe.value0;
    res.quantile_effects.push_back(qe);
  }
  res.median_effect = empirical_quantile(s1, 0.5) - empirical_quantile(s0, 0.5);

  std::vector<double> ratio(t_count);
  for (std::size_t t = 0; t < t_count; ++t) ratio[t] = res.zero1[t] / res.zero0[t];
  res.risk_ratio = mean_of(res.zero1) / mean_of(res.zero0);
  res.risk_ratio_mean = mean_of(ratio);
  res.risk_ratio_interval = equal_tailed(std::move(ratio), cfg.interval_level);

  for (int a = 0; a < 2; ++a) {
    const auto& means = a == 0 ? res.mean0 : res.mean1;
    const auto& pred = a == 0 ? res.pred0 : res.pred1;
    std::vector<double> d(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      double s = 0.0;
      for (std::size_t r = 0; r < reps; ++r) s += pred[t * reps + r];
      d[t] = s / static_cast<double>(reps) - means[t];
    }
    auto& c = res.consistency[a];
    c.standardized = mean_of(means);
    c.predictive = mean_of(pred);
    c.se = sd_of(d) / std::sqrt(static_cast<double>(t_count));
  }
  return res;
}

PropensityResult propensity_scores(const PosteriorTrace& trace, const Dataset& data, const BasePrior& prior,
                                   const StandardizationConfig& cfg) {
  cfg.validate();
  if (trace.empty()) throw Error(ErrorKind::usage, "posterior trace is empty");
  if (!(trace.schema == data.schema()) || trace.n_subjects() != data.size())
    throw Error(ErrorKind::schema, "trace and data disagree on schema or subject count");
  const auto& schema = data.schema();
  const std::size_t n = data.size();
  const std::size_t t_count = trace.size();
  const std::size_t mc = cfg.n_prior_mc;

  // Row t holds the per-subject ratio for draw t.
  std::vector<double> ratio(t_count * n);
  parallel_for(t_count, cfg.threads, [&](std::size_t t) {
    const DrawView view(trace.draws[t].state, schema);
    Random rng(derive_seed(cfg.seed, stream::propensity, t));
    std::vector<ClusterDensity> g0;
    g0.reserve(mc);
    for (std::size_t m = 0; m < mc; ++m) g0.emplace_back(schema, draw_from_prior(prior, schema, rng));

    const double log_g0 = std::log(view.alpha() / static_cast<double>(mc));
    const std::size_t k_count = view.num_clusters();
    std::vector<double> log_count(k_count);
    for (std::size_t k = 0; k < k_count; ++k) log_count[k] = std::log(static_cast<double>(view.count(k)));
    std::vector<double> num(k_count + mc), den(k_count + mc);
    for (std::size_t i = 0; i < n; ++i) {
      const auto l = data.l(i);
      const auto x = data.x(i);
      for (std::size_t k = 0; k < k_count; ++k) {
        const ClusterDensity& d = view.density(k);
        den[k] = log_count[k] + d.covariates(l);
        num[k] = den[k] + log_expit(d.treatment_logit(x));
      }
      for (std::size_t m = 0; m < mc; ++m) {
        den[k_count + m] = log_g0 + g0[m].covariates(l);
        num[k_count + m] = den[k_count + m] + log_expit(g0[m].treatment_logit(x));
      }
      ratio[t * n + i] = std::exp(log_sum_exp(num) - log_sum_exp(den));
    }
  });

  PropensityResult out;
  out.score.assign(n, 0.0);
  out.mc_se.assign(n, 0.0);
  out.arm = data.a();
  const double tt = static_cast<double>(t_count);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) s += ratio[t * n + i];
    const double mean = s / tt;
    double ss = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) ss += (ratio[t * n + i] - mean) * (ratio[t * n + i] - mean);
    out.score[i] = mean;
    out.mc_se[i] = t_count > 1 ? std::sqrt(ss / (tt - 1.0) / tt) : 0.0;
  }
  return out;
}

std::vector<double> qq_levels() {
  std::vector<double> q;
  for (int k = 1; k <= 49; ++k) q.push_back(0.02 * k);
  return q;
}

QQTable predictive_qq(const PosteriorTrace& trace, const Dataset& data, const BasePrior& prior,
                      std::size_t replicates, const StandardizationConfig& cfg) {
  if (trace.empty()) throw Error(ErrorKind::usage, "posterior trace is empty");
  if (replicates < 1) throw Error(ErrorKind::config, "replicates must be at least 1");
  if (!(trace.schema == data.schema())) throw Error(ErrorKind::schema, "trace and data schemas differ");
  const auto& schema = data.schema();
  const std::size_t n = data.size();

  QQTable table;
  table.levels = qq_levels();
  std::vector<double> obs = data.y();
  std::sort(obs.begin(), obs.end());
  for (double q : table.levels) table.observed.push_back(empirical_quantile(obs, q));

  table.replicates.resize(replicates);
  parallel_for(replicates, cfg.threads, [&](std::size_t r) {
    Random rng(derive_seed(cfg.seed, stream::ppc, r));
    const DrawView view(trace.draws[rng.index(trace.size())].state, schema);
    const double p_new = view.alpha() / (view.alpha() + static_cast<double>(view.n()));
    std::vector<double> y(n);
    std::vector<double> l(schema.size());
    std::vector<double> x(static_cast<std::size_t>(schema.outcome_dim()));
    std::span<double> enc(x.data() + 2, x.size() - 2);
    ClusterParams fresh;
    for (std::size_t i = 0; i < n; ++i) {
      const ClusterParams* w;
      if (rng.uniform() < p_new) {
        fresh = draw_from_prior(prior, schema, rng);
        w = &fresh;
      } else {
        w = &view.params(view.sample_cluster(rng));
      }
      draw_covariates(schema, w->theta, rng, l);
      encode_covariates(schema, l, enc);
      x[0] = 1.0;
      double t_lin = w->eta[0];
      for (std::size_t k = 0; k < enc.size(); ++k) t_lin += enc[k] * w->eta[static_cast<Eigen::Index>(k) + 1];
      x[1] = rng.bernoulli(expit(t_lin)) ? 1.0 : 0.0;
      const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
      const bool zero = rng.bernoulli(expit(xv.dot(w->gamma)));
      y[i] = zero ? 0.0 : rng.normal(xv.dot(w->beta), std::sqrt(w->phi));
    }
    std::sort(y.begin(), y.end());
    auto& row = table.replicates[r];
    for (double q : table.levels) row.push_back(empirical_quantile(y, q));
  });

  table.mean.assign(table.levels.size(), 0.0);
  for (const auto& row : table.replicates)
    for (std::size_t k = 0; k < row.size(); ++k) table.mean[k] += row[k] / static_cast<double>(replicates);
  return table;
}

}  // namespace zidp

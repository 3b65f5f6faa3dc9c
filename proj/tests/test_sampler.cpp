#include <doctest.h>

#include <set>

#include "support.hpp"
#include "zidp/clustering.hpp"
#include "zidp/error.hpp"
#include "zidp/sampler.hpp"
#include "zidp/simulate.hpp"

using namespace zidp;
using namespace zidp::test;

namespace {

Dataset ten_subjects() {
  std::vector<double> y;
  std::vector<int> a;
  std::vector<std::vector<double>> l;
  for (int i = 0; i < 10; ++i) {
    y.push_back(i % 3 == 0 ? 0.0 : 0.5 * i);
    a.push_back(i % 2);
    l.push_back({0.1 * i, static_cast<double>(i % 2)});
  }
  return make_dataset(small_schema(), y, a, l);
}

ClusterState forced_state(std::size_t n, std::size_t k, double alpha) {
  ClusterState s;
  for (std::size_t i = 0; i < n; ++i) s.labels.push_back(i % k);
  for (std::size_t c = 0; c < k; ++c) s.clusters[c].count = n / k + (c < n % k ? 1 : 0);
  s.alpha = alpha;
  s.next_id = k;
  return s;
}

}  // namespace

TEST_CASE("round-robin initialization") {
  const auto data = ten_subjects();
  SamplerConfig cfg;
  cfg.init_clusters = 5;
  Random rng(3);
  const auto s = initialize(data, small_prior(), ConcentrationSpec::gamma(), cfg, rng);
  CHECK(s.num_clusters() == 5);
  std::set<ClusterId> ids(s.labels.begin(), s.labels.end());
  CHECK(ids == std::set<ClusterId>{0, 1, 2, 3, 4});
  for (const auto& [id, c] : s.clusters) CHECK(c.count == 2);
  s.check_invariants();

  cfg.init_clusters = 1;
  Random rng2(3);
  const auto one = initialize(data, small_prior(), ConcentrationSpec::gamma(), cfg, rng2);
  CHECK(one.num_clusters() == 1);
  CHECK(one.clusters.begin()->second.count == 10);
}

TEST_CASE("initialization is seed-deterministic") {
  const auto data = ten_subjects();
  SamplerConfig cfg;
  Random r1(17), r2(17);
  const auto a = initialize(data, small_prior(), ConcentrationSpec::gamma(), cfg, r1);
  const auto b = initialize(data, small_prior(), ConcentrationSpec::gamma(), cfg, r2);
  CHECK(a.labels == b.labels);
  for (const auto& [id, c] : a.clusters) {
    CHECK(c.params.beta == b.clusters.at(id).params.beta);
    CHECK(c.params.phi == b.clusters.at(id).params.phi);
  }
}

TEST_CASE("beta and phi come from the prior when no member is positive") {
  const auto data = make_dataset(small_schema(), {0.0, 0.0}, {0, 1}, {{0.0, 0.0}, {1.0, 1.0}});
  BasePrior prior = small_prior();
  prior.beta.mean = Vector{{1.0, -2.0, 0.5, 3.0}};
  prior.beta.variance = Vector{{0.25, 1.0, 4.0, 0.01}};
  const std::size_t members[] = {0, 1};
  Random rng(5);
  const int draws = 40000;
  Vector sum = Vector::Zero(4), sum_sq = Vector::Zero(4);
  double phi_sum = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto bp = update_beta_phi(data, members, prior, 1.0, rng);
    sum += bp.beta;
    sum_sq += bp.beta.cwiseProduct(bp.beta);
    phi_sum += bp.phi;
  }
  const Vector mean = sum / draws;
  const Vector var = sum_sq / draws - mean.cwiseProduct(mean);
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(mean[k] - prior.beta.mean[k]) < 5.0 * std::sqrt(prior.beta.variance[k] / draws));
    CHECK(var[k] == doctest::Approx(prior.beta.variance[k]).epsilon(0.05));
  }
  // IG(3, 2) has mean 1.
  CHECK(phi_sum / draws == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("vague prior recovers least squares") {
  Random gen(11);
  std::vector<double> y;
  std::vector<int> a;
  std::vector<std::vector<double>> l;
  const double truth[] = {2.0, -1.0, 0.7, 1.5};
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> li{gen.normal(), static_cast<double>(gen.bernoulli(0.5))};
    const int ai = gen.bernoulli(0.5);
    y.push_back(truth[0] + truth[1] * ai + truth[2] * li[0] + truth[3] * li[1] + 0.1 * gen.normal());
    a.push_back(ai);
    l.push_back(li);
  }
  const auto data = make_dataset(small_schema(), y, a, l);

  Eigen::MatrixXd x(20, 4);
  Eigen::VectorXd yy(20);
  for (int i = 0; i < 20; ++i) {
    x.row(i) << 1.0, a[static_cast<std::size_t>(i)], l[static_cast<std::size_t>(i)][0], l[static_cast<std::size_t>(i)][1];
    yy[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * yy);

  BasePrior prior = small_prior();
  prior.beta.variance = Vector::Constant(4, 1e8);
  std::vector<std::size_t> members(20);
  std::iota(members.begin(), members.end(), 0);
  Random rng(2);
  Vector sum = Vector::Zero(4);
  const int draws = 4000;
  for (int t = 0; t < draws; ++t) sum += update_beta_phi(data, members, prior, 0.01, rng).beta;
  for (int k = 0; k < 4; ++k) CHECK(sum[k] / draws == doctest::Approx(ols[k]).epsilon(1e-2));
}

TEST_CASE("conjugate beta moments on a five-point cluster") {
  const auto data = make_dataset(small_schema(), {1.0, 2.5, -0.5, 3.0, 0.8}, {1, 0, 0, 1, 1},
                                 {{0.2, 1}, {-0.4, 0}, {1.1, 1}, {0.0, 0}, {0.6, 1}});
  BasePrior prior = small_prior();
  prior.beta.mean = Vector{{0.5, 0.0, -0.3, 0.2}};
  prior.beta.variance = Vector{{2.0, 1.0, 0.5, 3.0}};
  const double phi = 0.8;

  Eigen::MatrixXd x(5, 4);
  Eigen::VectorXd yy(5);
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 4; ++c) x(i, c) = data.x(static_cast<std::size_t>(i))[static_cast<std::size_t>(c)];
    yy[i] = data.y(static_cast<std::size_t>(i));
  }
  const Eigen::MatrixXd s0_inv = prior.beta.variance.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd v = (s0_inv + x.transpose() * x / phi).inverse();
  const Eigen::VectorXd m = v * (s0_inv * prior.beta.mean + x.transpose() * yy / phi);

  const std::size_t members[] = {0, 1, 2, 3, 4};
  Random rng(9);
  const int draws = 60000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(4, 4);
  for (int t = 0; t < draws; ++t) {
    const Eigen::VectorXd b = update_beta_phi(data, members, prior, phi, rng).beta;
    sum += b;
    outer += b * b.transpose();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::MatrixXd cov = outer / draws - mean * mean.transpose();
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(mean[k] - m[k]) < 5.0 * std::sqrt(v(k, k) / draws));
    CHECK(cov(k, k) == doctest::Approx(v(k, k)).epsilon(0.04));
  }
  CHECK(cov(0, 2) == doctest::Approx(v(0, 2)).epsilon(0.1));
}

TEST_CASE("binary covariate update is Beta(1 + ones, 1 + zeros)") {
  const auto data = make_dataset(small_schema(), {0, 0, 0, 0}, {0, 0, 0, 0}, {{0, 1}, {0, 1}, {0, 1}, {0, 0}});
  const std::size_t members[] = {0, 1, 2, 3};
  const auto prior = small_prior();
  const CovariateParams current{ContinuousParam{0.0, 1.0}, BinaryParam{0.5}};
  Random rng(4);
  std::vector<double> p, empty;
  for (int t = 0; t < 40000; ++t) {
    p.push_back(std::get<BinaryParam>(update_theta(data, members, prior, current, rng)[1]).prob);
    empty.push_back(std::get<BinaryParam>(update_theta(data, {}, prior, current, rng)[1]).prob);
  }
  // Beta(4, 2): mean 2/3, variance 8 / (36 * 7).
  CHECK(mean_of(p) == doctest::Approx(2.0 / 3.0).epsilon(0.01));
  CHECK(var_of(p) == doctest::Approx(8.0 / 252.0).epsilon(0.05));
  CHECK(mean_of(empty) == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var_of(empty) == doctest::Approx(1.0 / 12.0).epsilon(0.05));
}

TEST_CASE("continuous covariate mean shrinks toward the prior") {
  const std::vector<double> vals{1.0, 1.4, 0.8, 1.2, 1.6, 0.9};
  std::vector<std::vector<double>> l;
  for (double v : vals) l.push_back({v, 0});
  const auto data = make_dataset(small_schema(), std::vector<double>(6, 0.0), std::vector<int>(6, 0), l);
  const std::size_t members[] = {0, 1, 2, 3, 4, 5};
  BasePrior prior = small_prior();
  prior.covariates[0] = ContinuousCovariatePrior{-2.0, 0.05, {3.0, 2.0}};
  const double var = 0.5;
  const CovariateParams current{ContinuousParam{0.0, var}, BinaryParam{0.5}};
  const double n = 6.0, s = std::accumulate(vals.begin(), vals.end(), 0.0);
  const double w = (1.0 / 0.05) / (1.0 / 0.05 + n / var);
  const double expected = w * -2.0 + (1.0 - w) * s / n;
  Random rng(8);
  std::vector<double> draws;
  for (int t = 0; t < 10000; ++t)
    draws.push_back(std::get<ContinuousParam>(update_theta(data, members, prior, current, rng)[0]).mean);
  CHECK(mean_of(draws) == doctest::Approx(expected).epsilon(1e-2));
}

TEST_CASE("logistic step with zero jump is always accepted") {
  const int targets[] = {1, 0, 1};
  RowMatrix design(3, 2);
  design << 1, 0.2, 1, -0.5, 1, 1.0;
  const GaussianPrior prior{Vector::Zero(2), Vector::Constant(2, 2.0)};
  Random rng(1);
  const Vector current{{0.3, -0.2}};
  for (int t = 0; t < 100; ++t) {
    const auto step = update_logistic_block(targets, design, prior, current, 0.0, rng);
    CHECK(step.accepted);
    CHECK(step.coef == current);
  }
}

TEST_CASE("all-one targets push a flat-prior intercept upward") {
  const std::vector<int> targets(50, 1);
  const RowMatrix design = RowMatrix::Ones(50, 1);
  const GaussianPrior prior{Vector::Zero(1), Vector::Constant(1, 1e6)};
  Random rng(6);
  Vector coef = Vector::Zero(1);
  double sum = 0.0;
  for (int t = 0; t < 10000; ++t) {
    coef = update_logistic_block(targets, design, prior, coef, 0.5, rng).coef;
    sum += coef[0];
  }
  CHECK(sum / 10000.0 > 2.0);
}

TEST_CASE("logistic chain started at the mode does not drift") {
  Random gen(21);
  const int rows = 200;
  RowMatrix design(rows, 3);
  std::vector<int> targets(rows);
  for (int r = 0; r < rows; ++r) {
    design(r, 0) = 1.0;
    design(r, 1) = gen.normal();
    design(r, 2) = gen.bernoulli(0.4) ? 1.0 : 0.0;
    targets[static_cast<std::size_t>(r)] =
        gen.bernoulli(logistic(-0.3 + 0.8 * design(r, 1) - 0.6 * design(r, 2))) ? 1 : 0;
  }
  const GaussianPrior prior{Vector::Zero(3), Vector::Constant(3, 2.0)};

  // Newton / IRLS for the penalized mode.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd g = -b / 2.0;
    Eigen::MatrixXd h = -Eigen::MatrixXd::Identity(3, 3) / 2.0;
    for (int r = 0; r < rows; ++r) {
      const Eigen::VectorXd xr = design.row(r).transpose();
      const double p = logistic(xr.dot(b));
      g += (targets[static_cast<std::size_t>(r)] - p) * xr;
      h -= p * (1 - p) * xr * xr.transpose();
    }
    b -= h.ldlt().solve(g);
  }
  Random rng(22);
  Vector coef = b;
  std::vector<double> lp;
  for (int t = 0; t < 10000; ++t) {
    coef = update_logistic_block(targets, design, prior, coef, 0.15, rng).coef;
    lp.push_back(logistic_log_posterior(targets, design, prior, coef));
  }
  const std::vector<double> first(lp.begin(), lp.begin() + 5000), second(lp.begin() + 5000, lp.end());
  const double noise = std::hypot(batch_se(first, 25), batch_se(second, 25));
  CHECK(mean_of(second) > mean_of(first) - 4.0 * noise);
  // Near-Gaussian posterior: E[log p] is d/2 below the mode.
  CHECK(mean_of(lp) == doctest::Approx(logistic_log_posterior(targets, design, prior, b) - 1.5).epsilon(0.01));
}

TEST_CASE("one subject always forms one cluster") {
  const auto data = make_dataset(small_schema(), {1.0}, {1}, {{0.2, 1}});
  SamplerConfig cfg;
  cfg.init_clusters = 1;
  cfg.iterations = 200;
  cfg.burn_in = 0;
  const auto trace = run_sampler(data, small_prior(), ConcentrationSpec::gamma(), cfg);
  for (const auto& d : trace.draws) CHECK(d.state.num_clusters() == 1);
}

TEST_CASE("vanishing concentration never opens clusters") {
  const auto data = ten_subjects();
  SamplerConfig cfg;
  cfg.init_clusters = 4;
  Random rng(12);
  const auto prior = small_prior();
  const auto conc = ConcentrationSpec::fixed(1e-12);
  auto state = initialize(data, prior, conc, cfg, rng);
  std::size_t k = state.num_clusters();
  AcceptanceStats stats;
  for (int t = 0; t < 300; ++t) {
    update_cluster_params(state, data, prior, cfg, rng, stats);
    update_assignments(state, data, prior, cfg, rng);
    CHECK(state.num_clusters() <= k);
    k = state.num_clusters();
  }
}

TEST_CASE("sweep invariants hold") {
  const auto data = ten_subjects();
  SamplerConfig cfg;
  Random rng(13);
  const auto prior = small_prior();
  const auto conc = ConcentrationSpec::fixed(3.0);
  auto state = initialize(data, prior, conc, cfg, rng);
  AcceptanceStats stats;
  for (int t = 0; t < 200; ++t) {
    update_cluster_params(state, data, prior, cfg, rng, stats);
    update_assignments(state, data, prior, cfg, rng);
    CHECK_NOTHROW(state.check_invariants());
    std::size_t total = 0;
    for (const auto& [id, c] : state.clusters) {
      CHECK(c.count > 0);
      total += c.count;
    }
    CHECK(total == data.size());
  }
}

TEST_CASE("two-subject co-clustering matches enumeration") {
  const auto data = make_dataset(small_schema(), {1.2, 0.4}, {1, 0}, {{0.3, 1}, {-0.6, 0}});
  const auto prior = small_prior();
  const Eigen::MatrixXd exact = enumerated_coclustering(data, prior, 1.0);
  SamplerConfig cfg;
  cfg.freeze_logistic = true;
  cfg.iterations = 20500;
  cfg.burn_in = 500;
  cfg.init_clusters = 1;
  cfg.seed = 4;
  const auto trace = run_sampler(data, prior, ConcentrationSpec::fixed(1.0), cfg);
  const Eigen::MatrixXd est = posterior_mode_matrix(trace);
  CHECK(std::abs(est(0, 1) - exact(0, 1)) < 0.03);
}

TEST_CASE("fixed concentration is never moved") {
  const auto s = forced_state(10, 3, 2.5);
  Random rng(1);
  for (int t = 0; t < 10; ++t) CHECK(update_alpha(s, ConcentrationSpec::fixed(2.5), rng) == 2.5);
}

TEST_CASE("alpha chain recovers the prior at n = 1") {
  auto s = forced_state(1, 1, 1.0);
  Random rng(31);
  const auto conc = ConcentrationSpec::gamma(1.0, 1.0);
  std::vector<double> draws;
  for (int t = 0; t < 100000; ++t) {
    s.alpha = update_alpha(s, conc, rng);
    draws.push_back(s.alpha);
  }
  CHECK(mean_of(draws) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("alpha posterior increases with the cluster count") {
  const auto conc = ConcentrationSpec::gamma(1.0, 1.0);
  auto run = [&](std::size_t k) {
    auto s = forced_state(100, k, 1.0);
    Random rng(7);
    double sum = 0.0;
    for (int t = 0; t < 20000; ++t) {
      s.alpha = update_alpha(s, conc, rng);
      sum += s.alpha;
    }
    return sum / 20000.0;
  };
  CHECK(run(10) > run(2));
}

TEST_CASE("alpha target includes the log-scale Jacobian") {
  const auto conc = ConcentrationSpec::gamma(2.0, 0.5);
  const double a = 1.7;
  const double expected = conc.log_prior(a) + 4.0 * std::log(a) + std::lgamma(a) - std::lgamma(a + 30.0) + std::log(a);
  CHECK(alpha_log_target(a, 4, 30, conc) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sampler is seed-deterministic and keeps the configured number of draws") {
  const auto data = ten_subjects();
  SamplerConfig cfg;
  cfg.iterations = 120;
  cfg.burn_in = 20;
  cfg.thin = 3;
  const auto a = run_sampler(data, small_prior(), ConcentrationSpec::gamma(), cfg);
  const auto b = run_sampler(data, small_prior(), ConcentrationSpec::gamma(), cfg);
  CHECK(a.size() == 33);
  CHECK(a.size() == cfg.retained_draws());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a.draws[t].iteration == b.draws[t].iteration);
    CHECK(a.draws[t].state.labels == b.draws[t].state.labels);
    CHECK(a.draws[t].state.alpha == b.draws[t].state.alpha);
    for (const auto& [id, c] : a.draws[t].state.clusters) {
      const auto& o = b.draws[t].state.clusters.at(id);
      CHECK(c.params.beta == o.params.beta);
      CHECK(c.params.gamma == o.params.gamma);
      CHECK(c.params.phi == o.params.phi);
    }
  }
}

TEST_CASE("invalid sampler settings are rejected") {
  SamplerConfig cfg;
  cfg.burn_in = cfg.iterations;
  CHECK_THROWS_AS(cfg.validate(10), Error);
  SamplerConfig zero_aux;
  zero_aux.aux_clusters = 0;
  CHECK_THROWS_AS(zero_aux.validate(10), Error);
}

TEST_CASE("single-population data is fitted with few clusters") {
  Random rng(derive_seed(77, stream::simulate));
  const auto sim = simulate_parametric(1000, rng);
  SamplerConfig cfg;
  cfg.seed = 77;
  const auto trace = run_sampler(sim.data, empirical_prior(sim.data), ConcentrationSpec::gamma(), cfg);
  std::size_t small = 0;
  for (const auto& d : trace.draws) small += d.state.num_clusters() <= 3 ? 1 : 0;
  const double share = static_cast<double>(small) / static_cast<double>(trace.size());
  MESSAGE("share of draws with at most 3 clusters: " << share);
  CHECK(share >= 0.8);
}

#ifndef ZIDP_TESTS_SUPPORT_HPP
#define ZIDP_TESTS_SUPPORT_HPP

// Fixtures and independent reference computations shared by the tests.

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "zidp/model.hpp"
#include "zidp/prior.hpp"
#include "zidp/sampler.hpp"

namespace zidp::test {

constexpr double kPi = 3.14159265358979323846;

inline double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * kPi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Standard error of the mean of a correlated series from non-overlapping batch means.
inline double batch_se(const std::vector<double>& v, std::size_t batches = 50) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += v[b * len + k];
    means.push_back(s / static_cast<double>(len));
  }
  return std::sqrt(var_of(means) / static_cast<double>(batches));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Composite Simpson rule on [lo, hi] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int panels) {
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

// One continuous and one binary covariate.
inline CovariateSchema small_schema() {
  return CovariateSchema({{"L1", CovariateKind::continuous, 0}, {"L2", CovariateKind::binary, 0}});
}

inline Dataset make_dataset(const CovariateSchema& schema, std::vector<double> y, std::vector<int> a,
                            const std::vector<std::vector<double>>& l) {
  RowMatrix m(static_cast<Eigen::Index>(l.size()), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < l.size(); ++i)
    for (std::size_t k = 0; k < schema.size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = l[i][k];
  return Dataset(schema, std::move(y), std::move(a), std::move(m));
}

// Hand-set base prior for small_schema(): beta ~ N(0, 1), phi ~ IG(3, 2),
// gamma, eta at 0 with unit variance, L1 mean ~ N(0, 1), variance ~ IG(3, 2),
// L2 ~ Beta(1, 1).
inline BasePrior small_prior() {
  BasePrior p;
  p.beta = {Vector::Zero(4), Vector::Ones(4)};
  p.phi = {3.0, 2.0};
  p.gamma = {Vector::Zero(4), Vector::Ones(4)};
  p.eta = {Vector::Zero(3), Vector::Ones(3)};
  p.covariates = {ContinuousCovariatePrior{0.0, 1.0, {3.0, 2.0}}, BetaPrior{1.0, 1.0}};
  return p;
}

// Log marginal likelihood of a block of subjects under small_prior() with
// gamma and eta held at zero. beta is integrated analytically given phi and
// phi by quadrature on log(phi); the L1 mean analytically given its variance
// and the variance by quadrature.
inline double block_log_marginal(const Dataset& data, const BasePrior& prior, const std::vector<std::size_t>& block) {
  double total = 0.0;
  total += static_cast<double>(block.size()) * 2.0 * std::log(0.5);  // zero and treatment factors at expit(0)

  auto log_ig = [](double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
  };
  auto gaussian_block = [](const Eigen::VectorXd& r, const Eigen::MatrixXd& cov) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    const double logdet = ldlt.vectorD().array().log().sum();
    return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * kPi) + logdet + r.dot(ldlt.solve(r)));
  };
  auto integrate_log = [&](const std::function<double(double)>& log_integrand) {
    // Integrate exp(log_integrand(e^t)) e^t dt with a max shift for stability.
    const int panels = 4000;
    const double lo = -12.0, hi = 8.0;
    double peak = -1e300;
    for (int k = 0; k <= panels; ++k) {
      const double t = lo + (hi - lo) * k / panels;
      peak = std::max(peak, log_integrand(std::exp(t)) + t);
    }
    const double v = simpson([&](double t) { return std::exp(log_integrand(std::exp(t)) + t - peak); }, lo, hi, panels);
    return peak + std::log(v);
  };

  std::vector<std::size_t> pos;
  for (std::size_t i : block)
    if (data.z(i) == 0) pos.push_back(i);
  if (!pos.empty()) {
    const int d = data.schema().outcome_dim();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(pos.size()), d);
    Eigen::VectorXd y(static_cast<Eigen::Index>(pos.size()));
    for (std::size_t r = 0; r < pos.size(); ++r) {
      for (int c = 0; c < d; ++c) x(static_cast<Eigen::Index>(r), c) = data.x(pos[r])[static_cast<std::size_t>(c)];
      y[static_cast<Eigen::Index>(r)] = data.y(pos[r]);
    }
    const Eigen::VectorXd resid = y - x * prior.beta.mean;
    const Eigen::MatrixXd xvx = x * prior.beta.variance.asDiagonal() * x.transpose();
    total += integrate_log([&](double phi) {
      const Eigen::MatrixXd cov = xvx + phi * Eigen::MatrixXd::Identity(x.rows(), x.rows());
      return gaussian_block(resid, cov) + log_ig(phi, prior.phi.shape, prior.phi.rate);
    });
  }

  const auto& c = std::get<ContinuousCovariatePrior>(prior.covariates[0]);
  const auto nb = static_cast<Eigen::Index>(block.size());
  Eigen::VectorXd l1(nb);
  for (Eigen::Index r = 0; r < nb; ++r) l1[r] = data.l(block[static_cast<std::size_t>(r)])[0] - c.mean0;
  total += integrate_log([&](double v) {
    const Eigen::MatrixXd cov = v * Eigen::MatrixXd::Identity(nb, nb) + c.var0 * Eigen::MatrixXd::Ones(nb, nb);
    return gaussian_block(l1, cov) + log_ig(v, c.variance.shape, c.variance.rate);
  });

  const auto& b = std::get<BetaPrior>(prior.covariates[1]);
  double ones = 0.0;
  for (std::size_t i : block) ones += data.l(i)[1];
  const double zeros = static_cast<double>(block.size()) - ones;
  auto lbeta = [](double p, double q) { return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q); };
  total += lbeta(b.a + ones, b.b + zeros) - lbeta(b.a, b.b);
  return total;
}

// Visits every set partition of {0..n-1} as restricted growth strings.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> labels(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int max_label) {
    if (i == n) {
      fn(labels);
      return;
    }
    for (int k = 0; k <= max_label + 1; ++k) {
      labels[i] = k;
      rec(i + 1, std::max(max_label, k));
    }
  };
  if (n == 0) return;
  labels[0] = 0;
  rec(1, 0);
}

// Exact co-clustering probabilities under the CRP(alpha) prior times the
// block marginals above.
inline Eigen::MatrixXd enumerated_coclustering(const Dataset& data, const BasePrior& prior, double alpha,
                                               std::size_t* partitions = nullptr) {
  const std::size_t n = data.size();
  std::vector<double> log_w;
  std::vector<std::vector<int>> all;
  for_each_partition(n, [&](const std::vector<int>& labels) {
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    double lw = k * std::log(alpha);
    for (int b = 0; b < k; ++b) {
      std::vector<std::size_t> block;
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == b) block.push_back(i);
      lw += std::lgamma(static_cast<double>(block.size())) + block_log_marginal(data, prior, block);
    }
    log_w.push_back(lw);
    all.push_back(labels);
  });
  if (partitions) *partitions = all.size();
  const double peak = *std::max_element(log_w.begin(), log_w.end());
  double z = 0.0;
  for (double& w : log_w) z += (w = std::exp(w - peak));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < all.size(); ++p)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (all[p][i] == all[p][j]) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += log_w[p] / z;
  return m;
}

// Five subjects in two visibly different groups.
inline Dataset five_subjects() {
  return make_dataset(small_schema(), {1.2, 0.0, 1.0, -1.5, -1.1}, {1, 0, 1, 0, 0},
                      {{0.3, 1}, {0.1, 1}, {0.4, 0}, {-1.2, 0}, {-0.9, 0}});
}

}  // namespace zidp::test

#endif  // ZIDP_TESTS_SUPPORT_HPP

#include "zidp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "zidp/error.hpp"
#include "zidp/parallel.hpp"

namespace zidp {

namespace {

constexpr std::size_t kCovariates = 5;
constexpr std::array<double, 3> kClusterMean{0.9, 0.0, 0.375};
constexpr std::array<double, 3> kClusterProb{0.25, 0.5, 0.75};
constexpr std::array<double, 3> kClusterScale{1e4, 2e4, 3e4};
constexpr double kCovariateSd = 0.1;

// Draws (cluster, L1..L5).
int draw_covariates_for(DgpKind kind, Random& rng, std::span<double> l) {
  int c = 0;
  double mean = 0.0, prob = 0.5;
  if (kind == DgpKind::clustered) {
    c = static_cast<int>(rng.index(3));
    mean = kClusterMean[c];
    prob = kClusterProb[c];
  }
  l[0] = rng.normal(mean, kCovariateSd);
  for (std::size_t j = 1; j < kCovariates; ++j) l[j] = rng.bernoulli(prob) ? 1.0 : 0.0;
  return c;
}

double draw_outcome(const SubjectModel& m, int a, bool zero, Random& rng) {
  if (zero) return 0.0;
  double y = 0.0;
  while (!(y > 0.0)) y = rng.gamma(m.shape[a], m.scale[a]);
  return y;
}

}  // namespace

const char* to_string(DgpKind kind) noexcept {
  switch (kind) {
    case DgpKind::clustered: return "clustered";
    case DgpKind::parametric: return "parametric";
    case DgpKind::null_effect: return "null";
  }
  return "unknown";
}

DgpKind parse_dgp(std::string_view name) {
  if (name == "clustered") return DgpKind::clustered;
  if (name == "parametric") return DgpKind::parametric;
  if (name == "null") return DgpKind::null_effect;
  throw Error(ErrorKind::config, "unknown data-generating process '" + std::string(name) +
                                     "' (expected clustered, parametric or null)");
}

CovariateSchema dgp_schema() {
  std::vector<CovariateSpec> specs;
  specs.push_back({"L1", CovariateKind::continuous, 0});
  for (int j = 2; j <= 5; ++j) specs.push_back({"L" + std::to_string(j), CovariateKind::binary, 0});
  return CovariateSchema(std::move(specs));
}

SubjectModel subject_model(DgpKind kind, int cluster, std::span<const double> l, const DgpOptions& opts) {
  const double l1 = l[0];
  const double s = l[1] + l[2] + l[3];
  SubjectModel m;
  if (kind == DgpKind::clustered) {
    double t = 0.0;
    for (int a = 0; a < 2; ++a) {
      double zl = 0.0, shape = 0.0;
      switch (cluster) {
        case 0:
          t = 0.5 - l1 + s;
          zl = -2.0 - 2.0 * a + l1 + s;
          shape = 4.0 + a + 2.0 * l1 + s;
          break;
        case 1:
          t = 0.2 + 2.0 * l1 - 2.0 * s;
          zl = -2.0 + 0.5 * a - 2.0 * l1 + 2.0 * s;
          shape = 5.0 + a - 5.0 * l1 + s;
          break;
        default:
          t = 0.8 + l1 - s;
          zl = 2.5 + a - l1 - s;
          shape = 7.0 + a + l1 + s;
          break;
      }
      m.zero_prob[a] = expit(zl);
      m.shape[a] = std::max(shape, 1e-3);
      m.scale[a] = kClusterScale[static_cast<std::size_t>(cluster)];
    }
    m.propensity = expit(t);
    return m;
  }

  const double effect = kind == DgpKind::parametric ? 1.0 : 0.0;
  // All four binary covariates enter the single-cluster model.
  const double s4 = s + l[4];
  m.propensity = expit(2.0 + 3.0 * l1 - s4);
  for (int a = 0; a < 2; ++a) {
    m.zero_prob[a] = expit(-2.0 + 0.5 * effect * a - 2.0 * l1 + s4);
    const double mu = 3e5 + 5e4 * effect * a - 1e5 * l1 + s4;
    m.shape[a] = mu * mu / 1e9;
    m.scale[a] = (kind == DgpKind::parametric && opts.literal_parametric_scale) ? mu / 1e9 : 1e9 / mu;
  }
  return m;
}

namespace {

SimulatedData simulate_kind(DgpKind kind, std::size_t n, Random& rng, const DgpOptions& opts) {
  if (n < 1) throw Error(ErrorKind::config, "simulated sample size must be at least 1");
  std::vector<double> y(n);
  std::vector<int> a(n);
  RowMatrix l(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kCovariates));
  std::vector<int> cluster(n);
  std::vector<double> propensity(n), zero_prob(n);
  std::array<double, kCovariates> row{};
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = draw_covariates_for(kind, rng, row);
    const SubjectModel m = subject_model(kind, cluster[i], row, opts);
    a[i] = rng.bernoulli(m.propensity) ? 1 : 0;
    const bool zero = rng.bernoulli(m.zero_prob[a[i]]);
    y[i] = draw_outcome(m, a[i], zero, rng);
    propensity[i] = m.propensity;
    zero_prob[i] = m.zero_prob[a[i]];
    for (std::size_t j = 0; j < kCovariates; ++j) l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return SimulatedData{Dataset(dgp_schema(), std::move(y), std::move(a), std::move(l)), std::move(cluster),
                       std::move(propensity), std::move(zero_prob)};
}

}  // namespace

SimulatedData simulate_clustered(std::size_t n, Random& rng) { return simulate_kind(DgpKind::clustered, n, rng, {}); }

SimulatedData simulate_parametric(std::size_t n, Random& rng, const DgpOptions& opts) {
  return simulate_kind(DgpKind::parametric, n, rng, opts);
}

SimulatedData simulate_null(std::size_t n, Random& rng) { return simulate_kind(DgpKind::null_effect, n, rng, {}); }

SimulatedData simulate(DgpKind kind, std::size_t n, Random& rng, const DgpOptions& opts) {
  return simulate_kind(kind, n, rng, opts);
}

PsiOracle true_psi(DgpKind kind, std::size_t draws, std::uint64_t seed, const DgpOptions& opts,
                   std::size_t threads) {
  if (draws < 2) throw Error(ErrorKind::config, "oracle needs at least two draws");
  constexpr std::size_t kChunk = 100000;
  const std::size_t chunks = (draws + kChunk - 1) / kChunk;
  struct Sums {
    double diff = 0.0, diff_sq = 0.0, cond = 0.0;
  };
  std::vector<Sums> partial(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Random rng(derive_seed(seed, stream::oracle, c));
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(draws, begin + kChunk);
    std::array<double, kCovariates> row{};
    Sums s;
    for (std::size_t i = begin; i < end; ++i) {
      const int cl = draw_covariates_for(kind, rng, row);
      const SubjectModel m = subject_model(kind, cl, row, opts);
      std::array<double, 2> y{};
      for (int a = 0; a < 2; ++a) y[a] = draw_outcome(m, a, rng.bernoulli(m.zero_prob[a]), rng);
      const double d = y[1] - y[0];
      s.diff += d;
      s.diff_sq += d * d;
      s.cond += (1.0 - m.zero_prob[1]) * m.shape[1] * m.scale[1] - (1.0 - m.zero_prob[0]) * m.shape[0] * m.scale[0];
    }
    partial[c] = s;
  });
  Sums total;
  for (const auto& s : partial) {
    total.diff += s.diff;
    total.diff_sq += s.diff_sq;
    total.cond += s.cond;
  }
  const double n = static_cast<double>(draws);
  PsiOracle out;
  out.sampled = total.diff / n;
  out.conditional = total.cond / n;
  const double var = (total.diff_sq - n * out.sampled * out.sampled) / (n - 1.0);
  out.sampled_se = std::sqrt(std::max(var, 0.0) / n);
  return out;
}

}  // namespace zidp

#ifndef ZIDP_SIMULATE_HPP
#define ZIDP_SIMULATE_HPP

// Synthetic data-generating processes with known causal effect.
//
// Both share five covariates: L1 continuous, L2..L5 binary. In the clustered
// process S sums L2..L4 and L5 is inert; in the parametric process S sums
// L2..L5.
//
// clustered: three equiprobable clusters, each with its own covariate,
//   treatment, zero and Gamma outcome models.
// parametric: one population; positive outcomes Gamma with mean
//   mu = 3e5 + 5e4 A - 1e5 L1 + S (shape mu^2/1e9, scale 1e9/mu).
// null: the parametric process with every treatment term removed.

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "zidp/model.hpp"
#include "zidp/random.hpp"

namespace zidp {

enum class DgpKind { clustered, parametric, null_effect };

const char* to_string(DgpKind kind) noexcept;
// Throws Error(config) for unknown names.
DgpKind parse_dgp(std::string_view name);

struct DgpOptions {
  // Parametric Gamma with scale mu/1e9 and shape mu^2/1e9 as literally
  // stated; the outcome mean is then mu^3/1e18 rather than mu.
  bool literal_parametric_scale = false;
};

struct SimulatedData {
  Dataset data;
  std::vector<int> cluster;         // generating cluster (0 for single-population processes)
  std::vector<double> propensity;   // true P(A = 1 | L)
  std::vector<double> zero_prob;    // true P(Z = 1 | A, L) at the drawn A
};

CovariateSchema dgp_schema();

SimulatedData simulate_clustered(std::size_t n, Random& rng);
SimulatedData simulate_parametric(std::size_t n, Random& rng, const DgpOptions& opts = {});
SimulatedData simulate_null(std::size_t n, Random& rng);
SimulatedData simulate(DgpKind kind, std::size_t n, Random& rng, const DgpOptions& opts = {});

// Closed-form pieces of each process, shared by the simulators and the oracle.
struct SubjectModel {
  double propensity = 0.0;
  std::array<double, 2> zero_prob{};
  std::array<double, 2> shape{};
  std::array<double, 2> scale{};
};
// l holds L1..L5.
SubjectModel subject_model(DgpKind kind, int cluster, std::span<const double> l, const DgpOptions& opts = {});

struct PsiOracle {
  double sampled = 0.0;      // difference of means of forced-treatment outcomes
  double sampled_se = 0.0;
  double conditional = 0.0;  // mean of E[Y^1 - Y^0 | L] over the same L draws
};

// Brute-force average causal effect from `draws` subjects with common L
// across arms, in fixed-size chunks with per-chunk seeds.
PsiOracle true_psi(DgpKind kind, std::size_t draws, std::uint64_t seed, const DgpOptions& opts = {},
                   std::size_t threads = 1);

}  // namespace zidp

#endif  // ZIDP_SIMULATE_HPP

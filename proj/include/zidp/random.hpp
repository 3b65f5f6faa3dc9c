#ifndef ZIDP_RANDOM_HPP
#define ZIDP_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace zidp {

// Stateless 64-bit mixer used for every seed derivation in the library.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for stream `stream`, element `index` under a master seed. Distinct
// (stream, index) pairs give decorrelated engines.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) noexcept;

// Well-known stream tags.
namespace stream {
inline constexpr std::uint64_t sampler = 1;
inline constexpr std::uint64_t standardize = 2;
inline constexpr std::uint64_t propensity = 3;
inline constexpr std::uint64_t ppc = 4;
inline constexpr std::uint64_t simulate = 5;
inline constexpr std::uint64_t replicate = 6;
inline constexpr std::uint64_t oracle = 7;
inline constexpr std::uint64_t relabel = 8;
}  // namespace stream

// Engine plus the handful of variates the model needs. Not thread-safe;
// one instance per chain or per work item.
class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() noexcept { return engine_; }

  double uniform();                              // [0, 1)
  double normal() { return normal_(engine_); }   // N(0, 1)
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  double gamma(double shape, double scale);
  double inverse_gamma(double shape, double rate);  // density ∝ x^{-shape-1} e^{-rate/x}
  double beta(double a, double b);                  // strictly inside (0, 1)
  std::vector<double> dirichlet(std::span<const double> concentration);
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n);  // uniform on {0, ..., n-1}

  // Samples an index with probability ∝ exp(log_weights[k]).
  std::size_t categorical_log(std::span<const double> log_weights);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// log(sum_k exp(v_k)); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v) noexcept;

}  // namespace zidp

#endif  // ZIDP_RANDOM_HPP

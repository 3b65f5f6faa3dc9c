#include "zidp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace zidp {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

double Random::uniform() {
  return std::generate_canonical<double, 53>(engine_);
}

double Random::gamma(double shape, double scale) {
  std::gamma_distribution<double> g(shape, scale);
  return g(engine_);
}

double Random::inverse_gamma(double shape, double rate) {
  double g = gamma(shape, 1.0 / rate);
  if (g <= 0.0) g = std::numeric_limits<double>::min();
  return 1.0 / g;
}

double Random::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  double v = (x + y) > 0.0 ? x / (x + y) : 0.5;
  constexpr double lo = 1e-300;
  return std::clamp(v, lo, std::nextafter(1.0, 0.0));
}

std::vector<double> Random::dirichlet(std::span<const double> concentration) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::max(gamma(concentration[k], 1.0), 1e-300);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t Random::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  return d(engine_);
}

std::size_t Random::categorical_log(std::span<const double> log_weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) mx = std::max(mx, w);
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - mx);
  double u = uniform() * total;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    u -= std::exp(log_weights[k] - mx);
    if (u < 0.0) return k;
  }
  // Rounding left u marginally non-negative: return the last positive weight.
  for (std::size_t k = log_weights.size(); k-- > 0;)
    if (log_weights[k] > -std::numeric_limits<double>::infinity()) return k;
  return log_weights.size() - 1;
}

double log_sum_exp(std::span<const double> v) noexcept {
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : v) mx = std::max(mx, w);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double w : v) s += std::exp(w - mx);
  return mx + std::log(s);
}

}  // namespace zidp

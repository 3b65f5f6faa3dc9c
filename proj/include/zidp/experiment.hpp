#ifndef ZIDP_EXPERIMENT_HPP
#define ZIDP_EXPERIMENT_HPP

// Replicated simulate -> fit -> standardize runs scored against the
// brute-force effect, with a per-replicate checkpoint for resumption.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zidp/causal.hpp"
#include "zidp/prior.hpp"
#include "zidp/sampler.hpp"
#include "zidp/simulate.hpp"

namespace zidp {

struct ExperimentConfig {
  DgpKind dgp = DgpKind::parametric;
  DgpOptions dgp_options;
  std::size_t n = 1000;
  std::size_t n_datasets = 100;
  std::uint64_t seed = 1;
  SamplerConfig sampler;
  ConcentrationSpec concentration;
  CalibrationOptions calibration;
  StandardizationConfig standardization;
  std::size_t oracle_draws = 10000000;
  // Skips the oracle when set.
  std::optional<double> true_psi;
  std::size_t threads = 1;

  void validate() const;
};

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double mean_clusters = 0.0;
  double seconds = 0.0;
};

struct ExperimentReport {
  double true_psi = 0.0;
  std::vector<ReplicateResult> replicates;  // ordered by index
  double relative_bias = 0.0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double total_seconds = 0.0;
  std::size_t resumed = 0;  // replicates read back from the checkpoint
};

// Seed of replicate r: derive_seed(master, replicate stream, r).
std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) noexcept;

// One full replicate; deterministic in (cfg, r).
ReplicateResult run_replicate(const ExperimentConfig& cfg, std::size_t r);

ExperimentReport summarize(double true_psi, std::vector<ReplicateResult> replicates);

// Checkpoint: first line "# zidp-experiment <fingerprint> <true_psi>", then
// one CSV line per finished replicate. With resume, a checkpoint whose
// fingerprint differs or whose lines fail to parse raises Error(resume).
struct CheckpointOptions {
  std::filesystem::path path;
  std::string fingerprint;
  bool resume = false;
};

using ProgressFn = std::function<void(const ReplicateResult&, std::size_t done, std::size_t total)>;

ExperimentReport run_experiment(const ExperimentConfig& cfg, const CheckpointOptions* checkpoint = nullptr,
                                const ProgressFn& progress = {});

}  // namespace zidp

#endif  // ZIDP_EXPERIMENT_HPP

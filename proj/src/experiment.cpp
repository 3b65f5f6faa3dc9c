#include "zidp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "zidp/error.hpp"
#include "zidp/parallel.hpp"

namespace zidp {

namespace {

constexpr const char* kHeaderTag = "# zidp-experiment";

std::string format_line(const ReplicateResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%" PRIu64 ",%.17g,%.17g,%.17g,%.17g,%.17g", r.index, r.seed, r.point, r.lower,
                r.upper, r.mean_clusters, r.seconds);
  return buf;
}

ReplicateResult parse_line(const std::string& line, std::size_t line_no) {
  ReplicateResult r;
  std::istringstream in(line);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(in, field, ',')) fields.push_back(field);
  auto fail = [&]() -> Error {
    return Error(ErrorKind::resume, "checkpoint line " + std::to_string(line_no) + " is corrupted: '" + line + "'");
  };
  if (fields.size() != 7) throw fail();
  try {
    std::size_t pos = 0;
    r.index = std::stoull(fields[0], &pos);
    if (pos != fields[0].size()) throw fail();
    r.seed = std::stoull(fields[1], &pos);
    if (pos != fields[1].size()) throw fail();
    double* dst[] = {&r.point, &r.lower, &r.upper, &r.mean_clusters, &r.seconds};
    for (int k = 0; k < 5; ++k) {
      *dst[k] = std::stod(fields[2 + k], &pos);
      if (pos != fields[2 + k].size()) throw fail();
    }
  } catch (const std::logic_error&) {
    throw fail();
  }
  if (!std::isfinite(r.point) || !std::isfinite(r.lower) || !std::isfinite(r.upper)) throw fail();
  return r;
}

struct Checkpoint {
  double true_psi = 0.0;
  std::map<std::size_t, ReplicateResult> done;
};

Checkpoint read_checkpoint(const CheckpointOptions& opts, std::size_t n_datasets, std::uint64_t master) {
  std::ifstream in(opts.path);
  if (!in) throw Error(ErrorKind::resume, "cannot open checkpoint " + opts.path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::resume, "checkpoint " + opts.path.string() + " is empty");
  std::istringstream header(line);
  std::string hash, tag, fingerprint, psi_text;
  header >> hash >> tag >> fingerprint >> psi_text;
  if (hash + " " + tag != kHeaderTag || fingerprint.empty() || psi_text.empty())
    throw Error(ErrorKind::resume, "checkpoint header is corrupted");
  if (fingerprint != opts.fingerprint)
    throw Error(ErrorKind::resume, "checkpoint was written by a different configuration");
  Checkpoint cp;
  try {
    std::size_t pos = 0;
    cp.true_psi = std::stod(psi_text, &pos);
    if (pos != psi_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::resume, "checkpoint header is corrupted");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ReplicateResult r = parse_line(line, line_no);
    if (r.index >= n_datasets || r.seed != replicate_seed(master, r.index))
      throw Error(ErrorKind::resume, "checkpoint line " + std::to_string(line_no) + " does not belong to this run");
    cp.done[r.index] = r;
  }
  return cp;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n < 1) throw Error(ErrorKind::config, "n must be at least 1");
  if (n_datasets < 1) throw Error(ErrorKind::config, "n_datasets must be at least 1");
  if (!true_psi && oracle_draws < 2) throw Error(ErrorKind::config, "oracle_draws must be at least 2");
  sampler.validate(n);
  concentration.validate();
  standardization.validate();
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) noexcept {
  return derive_seed(master, stream::replicate, r);
}

ReplicateResult run_replicate(const ExperimentConfig& cfg, std::size_t r) {
  const auto start = std::chrono::steady_clock::now();
  ReplicateResult out;
  out.index = r;
  out.seed = replicate_seed(cfg.seed, r);

  Random sim_rng(derive_seed(out.seed, stream::simulate));
  const SimulatedData sim = simulate(cfg.dgp, cfg.n, sim_rng, cfg.dgp_options);
  const BasePrior prior = empirical_prior(sim.data, cfg.calibration);
  SamplerConfig sc = cfg.sampler;
  sc.seed = out.seed;
  const PosteriorTrace trace = run_sampler(sim.data, prior, cfg.concentration, sc);
  StandardizationConfig stc = cfg.standardization;
  stc.seed = out.seed;
  stc.threads = 1;
  const CausalResults res = estimate_effects(trace, prior, stc, &sim.data);

  out.point = res.psi;
  out.lower = res.psi_interval.lower;
  out.upper = res.psi_interval.upper;
  double k = 0.0;
  for (const auto& d : trace.draws) k += static_cast<double>(d.state.num_clusters());
  out.mean_clusters = k / static_cast<double>(trace.size());
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

ExperimentReport summarize(double true_psi, std::vector<ReplicateResult> replicates) {
  std::sort(replicates.begin(), replicates.end(),
            [](const ReplicateResult& a, const ReplicateResult& b) { return a.index < b.index; });
  ExperimentReport rep;
  rep.true_psi = true_psi;
  const double m = static_cast<double>(replicates.size());
  for (const auto& r : replicates) {
    rep.relative_bias += (r.point - true_psi) / std::abs(true_psi) / m;
    rep.coverage += (r.lower <= true_psi && true_psi <= r.upper ? 1.0 : 0.0) / m;
    rep.mean_width += (r.upper - r.lower) / m;
    rep.total_seconds += r.seconds;
  }
  rep.replicates = std::move(replicates);
  return rep;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const CheckpointOptions* checkpoint,
                                const ProgressFn& progress) {
  cfg.validate();

  Checkpoint cp;
  bool have_psi = false;
  if (checkpoint && checkpoint->resume && std::filesystem::exists(checkpoint->path)) {
    cp = read_checkpoint(*checkpoint, cfg.n_datasets, cfg.seed);
    have_psi = true;
  } else if (checkpoint && checkpoint->resume) {
    throw Error(ErrorKind::resume, "no checkpoint to resume at " + checkpoint->path.string());
  }
  if (!have_psi) {
    cp.true_psi = cfg.true_psi
                      ? *cfg.true_psi
                      : true_psi(cfg.dgp, cfg.oracle_draws, derive_seed(cfg.seed, stream::oracle), cfg.dgp_options,
                                 cfg.threads)
                            .sampled;
  }
  if (cfg.true_psi && *cfg.true_psi != cp.true_psi)
    throw Error(ErrorKind::resume, "checkpoint effect value differs from the configured one");

  std::ofstream out;
  if (checkpoint) {
    const bool fresh = !have_psi;
    out.open(checkpoint->path, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + checkpoint->path.string());
    if (fresh) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", cp.true_psi);
      out << kHeaderTag << ' ' << checkpoint->fingerprint << ' ' << buf << '\n' << std::flush;
    }
  }

  std::vector<std::size_t> todo;
  for (std::size_t r = 0; r < cfg.n_datasets; ++r)
    if (!cp.done.count(r)) todo.push_back(r);

  std::vector<ReplicateResult> results;
  for (const auto& [r, res] : cp.done) results.push_back(res);
  const std::size_t resumed = results.size();
  std::mutex mutex;
  parallel_for(todo.size(), cfg.threads, [&](std::size_t k) {
    ReplicateResult res = run_replicate(cfg, todo[k]);
    std::lock_guard lock(mutex);
    if (out.is_open()) out << format_line(res) << '\n' << std::flush;
    results.push_back(res);
    if (progress) progress(res, results.size(), cfg.n_datasets);
  });

  ExperimentReport rep = summarize(cp.true_psi, std::move(results));
  rep.resumed = resumed;
  return rep;
}

}  // namespace zidp

// Acceptance run: one PASS/FAIL line per criterion.
//
// usage: zidp_acceptance <zidp-binary> <work-dir> [criterion ...] [--strict]
//
// Exit status is 0 once every selected criterion has been evaluated; with
// --strict it is 1 when any criterion failed.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "../support.hpp"
#include "zidp/causal.hpp"
#include "zidp/clustering.hpp"
#include "zidp/experiment.hpp"
#include "zidp/io.hpp"
#include "zidp/parallel.hpp"
#include "zidp/simulate.hpp"

using namespace zidp;
using namespace zidp::test;
namespace fs = std::filesystem;

namespace {

constexpr double kClusteredReported = -9740.3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig desk_experiment(DgpKind kind, std::size_t n, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.dgp = kind;
  cfg.n = n;
  cfg.n_datasets = 100;
  cfg.seed = seed;
  cfg.sampler.iterations = 2000;
  cfg.sampler.burn_in = 1000;
  cfg.oracle_draws = 10000000;
  cfg.threads = hardware_threads();
  return cfg;
}

std::string experiment_detail(const ExperimentReport& r) {
  return "true effect " + fmt("%.1f", r.true_psi) + ", relative bias " + fmt("%+.4f", r.relative_bias) +
         ", coverage " + fmt("%.2f", r.coverage) + ", mean width " + fmt("%.0f", r.mean_width);
}

Outcome parametric_reproduction() {
  const auto rep = run_experiment(desk_experiment(DgpKind::parametric, 1000, 1001));
  return {std::abs(rep.relative_bias) < 0.10 && rep.coverage >= 0.88 && rep.coverage <= 1.0, experiment_detail(rep)};
}

Outcome clustered_reproduction() {
  const auto cfg = desk_experiment(DgpKind::clustered, 1000, 2002);
  const auto oracle = true_psi(cfg.dgp, cfg.oracle_draws, derive_seed(cfg.seed, stream::oracle), {}, cfg.threads);
  const double gap = std::abs(oracle.sampled - kClusteredReported) / std::abs(kClusteredReported);
  const auto rep = run_experiment(cfg);
  const bool estimates = std::abs(rep.relative_bias) < 0.20 && rep.coverage >= 0.85 && rep.coverage <= 1.0;
  const bool cross = gap <= 0.02;
  return {estimates && cross, experiment_detail(rep) + "; oracle " + fmt("%.1f", oracle.sampled) + " (se " +
                                  fmt("%.1f", oracle.sampled_se) + ", conditional " + fmt("%.1f", oracle.conditional) +
                                  ") vs reported " + fmt("%.1f", kClusteredReported) + ": gap " +
                                  fmt("%.1f%%", 100.0 * gap) + (estimates ? ", estimates within limits" : "")};
}

Outcome partition_oracle() {
  const auto data = five_subjects();
  const auto prior = small_prior();
  std::size_t partitions = 0;
  const Eigen::MatrixXd exact = enumerated_coclustering(data, prior, 1.0, &partitions);
  SamplerConfig cfg;
  cfg.freeze_logistic = true;
  cfg.init_clusters = 1;
  cfg.iterations = 21000;
  cfg.burn_in = 1000;
  cfg.seed = 3;
  const auto trace = run_sampler(data, prior, ConcentrationSpec::fixed(1.0), cfg);
  const Eigen::MatrixXd est = posterior_mode_matrix(trace);
  const double err = (est - exact).cwiseAbs().maxCoeff();
  return {partitions == 52 && err < 0.03, std::to_string(partitions) + " partitions, " + std::to_string(trace.size()) +
                                              " sweeps, max co-clustering error " + fmt("%.4f", err) +
                                              ", P(1~3) exact " + fmt("%.3f", exact(0, 2)) + " sampled " +
                                              fmt("%.3f", est(0, 2))};
}

Outcome crp_recovery() {
  std::vector<std::vector<double>> l(8, {0.0, 0.0});
  const auto data = make_dataset(small_schema(), std::vector<double>(8, 1.0), std::vector<int>(8, 0), l);
  SamplerConfig cfg;
  cfg.constant_likelihood = true;
  cfg.init_clusters = 1;
  cfg.iterations = 10100;
  cfg.burn_in = 100;
  cfg.seed = 4;
  const auto trace = run_sampler(data, small_prior(), ConcentrationSpec::fixed(1.0), cfg);
  std::vector<double> k;
  for (const auto& d : trace.draws) k.push_back(static_cast<double>(d.state.num_clusters()));
  double harmonic = 0.0;
  for (int i = 1; i <= 8; ++i) harmonic += 1.0 / i;
  const double se = batch_se(k, 50);
  const double mean = mean_of(k);
  return {std::abs(mean - harmonic) < 3.0 * se, "mean occupied clusters " + fmt("%.4f", mean) + " vs " +
                                                    fmt("%.6f", harmonic) + " (MC sd " + fmt("%.4f", se) + ", " +
                                                    std::to_string(k.size()) + " sweeps)"};
}

struct Fitted {
  SimulatedData sim;
  BasePrior prior;
  PosteriorTrace trace;
};

Fitted fit_clustered(std::size_t n, std::uint64_t seed) {
  Random rng(derive_seed(seed, stream::simulate));
  Fitted f{simulate_clustered(n, rng), {}, {}};
  f.prior = empirical_prior(f.sim.data);
  SamplerConfig cfg;
  cfg.seed = seed;
  f.trace = run_sampler(f.sim.data, f.prior, ConcentrationSpec::gamma(), cfg);
  return f;
}

Outcome internal_consistency(const Fitted& f) {
  StandardizationConfig cfg;
  cfg.predictive_per_draw = 20;
  cfg.threads = hardware_threads();
  const auto res = estimate_effects(f.trace, f.prior, cfg, &f.sim.data);
  bool ok = true;
  std::string detail;
  for (int a = 0; a < 2; ++a) {
    const auto& c = res.consistency[static_cast<std::size_t>(a)];
    const double z = (c.predictive - c.standardized) / c.se;
    ok = ok && std::abs(z) < 3.0;
    detail += (a ? "; " : "") + std::string("arm ") + std::to_string(a) + ": standardized " +
              fmt("%.1f", c.standardized) + ", predictive " + fmt("%.1f", c.predictive) + ", z " + fmt("%+.2f", z);
  }
  return {ok, detail};
}

Outcome null_effect() {
  auto cfg = desk_experiment(DgpKind::null_effect, 500, 6006);
  cfg.true_psi = 0.0;
  const auto rep = run_experiment(cfg);
  std::size_t covered = 0;
  double mean = 0.0;
  for (const auto& r : rep.replicates) {
    covered += (r.lower <= 0.0 && 0.0 <= r.upper) ? 1 : 0;
    mean += r.point / static_cast<double>(rep.replicates.size());
  }
  return {covered >= 90, std::to_string(covered) + " of " + std::to_string(rep.replicates.size()) +
                             " intervals cover 0, mean estimate " + fmt("%.1f", mean)};
}

Outcome skewness_capture() {
  const auto f = fit_clustered(3000, 7007);
  StandardizationConfig cfg;
  cfg.threads = hardware_threads();
  const auto qq = predictive_qq(f.trace, f.sim.data, f.prior, 100, cfg);
  bool ok = true;
  std::string detail;
  for (double q : {0.5, 0.9, 0.98}) {
    std::size_t k = 0;
    while (std::abs(qq.levels[k] - q) > 1e-9) ++k;
    const double obs = qq.observed[k], pred = qq.mean[k];
    const double rel = (pred - obs) / obs;
    ok = ok && std::abs(rel) <= 0.25;
    detail += (detail.empty() ? "" : "; ") + fmt("q%.2f", q) + " observed " + fmt("%.0f", obs) + " predictive " +
              fmt("%.0f", pred) + " (" + fmt("%+.1f%%", 100.0 * rel) + ")";
  }
  return {ok, detail};
}

Outcome propensity_calibration(const Fitted& f) {
  StandardizationConfig cfg;
  cfg.threads = hardware_threads();
  const auto p = propensity_scores(f.trace, f.sim.data, f.prior, cfg);
  const double r = pearson(p.score, f.sim.propensity);
  return {r > 0.8, "Pearson r " + fmt("%.4f", r) + " over " + std::to_string(p.score.size()) + " subjects"};
}

int shell(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

std::string outputs_of(const fs::path& dir) {
  const auto m = Manifest::read(dir / "manifest.txt");
  std::string s;
  if (const auto* sec = m.section("outputs"))
    for (const auto& [k, v] : *sec) s += k + "=" + v + "\n";
  return s;
}

Outcome cli_determinism(const std::string& zidp, const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "fit.cfg") << "iterations = 300\nburn_in = 150\nseed = 9\n";
    std::ofstream(root / "std.cfg") << "n_prior_mc = 20\nquantiles = 0.25, 0.5, 0.75\npredictive_per_draw = 3\n";
    std::ofstream(root / "exp.cfg") << "dgp = clustered\nn = 150\nn_datasets = 3\nseed = 5\noracle_draws = 200000\n"
                                       "iterations = 200\nburn_in = 100\n";
  }
  const std::string r = root.string();
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"sim", "simulate --dgp clustered --n 400 --seed 21 --oracle-draws 100000 --out " + r + "/sim"},
      {"fit", "fit --data " + r + "/sim/data.csv --schema " + r + "/sim/schema.txt --config " + r + "/fit.cfg --out " +
                  r + "/fit"},
      {"relabel", "relabel --trace " + r + "/fit --out " + r + "/relabel"},
      {"standardize", "standardize --trace " + r + "/fit --data " + r + "/sim/data.csv --config " + r +
                          "/std.cfg --out " + r + "/standardize"},
      {"propensity", "propensity --trace " + r + "/fit --data " + r + "/sim/data.csv --out " + r + "/propensity"},
      {"ppc", "ppc --trace " + r + "/fit --data " + r + "/sim/data.csv --replicates 20 --out " + r + "/ppc"},
      {"experiment", "experiment --config " + r + "/exp.cfg --out " + r + "/experiment"},
  };
  std::size_t identical = 0;
  std::string failed;
  for (const auto& [name, args] : runs) {
    if (shell(zidp + " " + args) != 0) {
      failed += " " + name + "(run)";
      continue;
    }
    const fs::path again = root / (name + "_rerun");
    const int rc = shell(zidp + " rerun --manifest " + (root / name).string() + " --out " + again.string());
    const auto a = outputs_of(root / name), b = fs::exists(again / "manifest.txt") ? outputs_of(again) : "";
    if (rc == 0 && !a.empty() && a == b)
      ++identical;
    else
      failed += " " + name;
  }
  return {identical == runs.size(), std::to_string(identical) + " of " + std::to_string(runs.size()) +
                                        " commands reproduced bit-identical outputs from their manifests" +
                                        (failed.empty() ? "" : "; differing:" + failed)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: zidp_acceptance <zidp-binary> <work-dir> [criterion ...] [--strict]\n";
    return 2;
  }
  const std::string zidp = argv[1];
  const fs::path work = argv[2];
  fs::create_directories(work);
  bool strict = false;
  std::set<int> only;
  for (int k = 3; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--strict")
      strict = true;
    else
      only.insert(std::stoi(a));
  }
  auto selected = [&](int c) { return only.empty() || only.count(c) > 0; };

  std::optional<Fitted> shared;
  auto fitted = [&]() -> const Fitted& {
    if (!shared) shared = fit_clustered(1000, 5005);
    return *shared;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"parametric-process reproduction", parametric_reproduction},
      {"clustered-process reproduction", clustered_reproduction},
      {"exhaustive-partition oracle", partition_oracle},
      {"CRP prior recovery", crp_recovery},
      {"estimator internal consistency", [&] { return internal_consistency(fitted()); }},
      {"null-effect coverage", null_effect},
      {"skewness capture", skewness_capture},
      {"propensity calibration", [&] { return propensity_calibration(fitted()); }},
      {"determinism from manifests", [&] { return cli_determinism(zidp, work); }},
  };

  int failures = 0, run = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    if (!selected(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++run;
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[c].first << ": " << o.detail << " ["
              << fmt("%.0f", secs) << " s]" << std::endl;
  }
  std::cout << run - failures << " of " << run << " criteria passed" << std::endl;
  return strict && failures > 0 ? 1 : 0;
}

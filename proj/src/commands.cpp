#include "zidp/commands.hpp"

#include <chrono>
#include <ctime>
#include <algorithm>
#include <iomanip>
#include <sstream>

#include "zidp/causal.hpp"
#include "zidp/clustering.hpp"
#include "zidp/experiment.hpp"
#include "zidp/io.hpp"
#include "zidp/simulate.hpp"

#ifndef ZIDP_VERSION
#define ZIDP_VERSION "unknown"
#endif

namespace zidp {

namespace {

Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }

const std::string& need(const ArgMap& args, const std::string& key) {
  const auto it = args.find(key);
  if (it == args.end() || it->second.empty()) throw usage_error("missing required option --" + key);
  return it->second;
}

std::optional<std::string> opt(const ArgMap& args, const std::string& key) {
  const auto it = args.find(key);
  if (it == args.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

// Collects what a run read and wrote, then writes manifest.txt.
class RunRecord {
 public:
  RunRecord(std::string command, const ArgMap& args, fs::path out) : out_(std::move(out)) {
    fs::create_directories(out_);
    m_.set("run", "command", command);
    m_.set("run", "version", ZIDP_VERSION);
    m_.set("run", "created", timestamp());
    for (const auto& [k, v] : args)
      if (k != "out") m_.set("args", k, v);
  }

  void input_file(const std::string& name, const fs::path& p) { m_.set("inputs", name, sha256_file(p)); }
  void input_trace(const std::string& name, const fs::path& dir) {
    for (const char* f : {"schema.txt", "prior.txt", "trace.csv", "data.csv"})
      if (fs::exists(dir / f)) input_file(name + "/" + f, dir / f);
  }
  void config(const std::vector<std::pair<std::string, std::string>>& kv, const std::string& section = "config") {
    for (const auto& [k, v] : kv) m_.set(section, k, v);
  }
  void output(const std::string& file) { outputs_.push_back(file); }
  const fs::path& dir() const { return out_; }
  fs::path path(const std::string& file) {
    output(file);
    return out_ / file;
  }

  void finish() {
    for (const auto& f : outputs_) m_.set("outputs", f, sha256_file(out_ / f));
    m_.write(out_ / "manifest.txt");
  }

 private:
  fs::path out_;
  Manifest m_;
  std::vector<std::string> outputs_;
};

double mean_of_vec(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string abs_path(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

template <class Apply>
KeyValues load_config(const ArgMap& args, RunRecord& rec, Apply apply) {
  KeyValues kv;
  if (auto c = opt(args, "config")) {
    kv = KeyValues::load(*c);
    rec.input_file("config", *c);
  }
  apply(kv);
  kv.reject_unused();
  return kv;
}

// Trace plus the data to evaluate it on: --data when given, else the copy
// stored with the trace.
struct Fitted {
  TraceBundle bundle;
  std::optional<Dataset> data;
};

Fitted load_fitted(const ArgMap& args, RunRecord& rec) {
  const fs::path trace_dir = need(args, "trace");
  Fitted f{read_trace_dir(trace_dir), std::nullopt};
  rec.input_trace("trace", trace_dir);
  fs::path data_path = trace_dir / "data.csv";
  if (auto d = opt(args, "data")) {
    data_path = *d;
    rec.input_file("data", data_path);
  }
  f.data.emplace(read_dataset(data_path, f.bundle.schema));
  if (!(f.data->schema() == f.bundle.trace.schema))
    throw Error(ErrorKind::schema, "data schema does not match the trace schema");
  if (f.data->size() != f.bundle.trace.n_subjects())
    throw Error(ErrorKind::schema, "data has " + std::to_string(f.data->size()) + " subjects, trace has " +
                                       std::to_string(f.bundle.trace.n_subjects()));
  return f;
}

StandardizationConfig standardization_from(const ArgMap& args, RunRecord& rec) {
  StandardizationConfig cfg;
  load_config(args, rec, [&](KeyValues& kv) { apply_standardization_keys(kv, cfg); });
  if (auto t = opt(args, "threads")) cfg.threads = static_cast<std::size_t>(parse_uint(*t, "--threads"));
  cfg.validate();
  rec.config(describe(cfg));
  return cfg;
}

std::vector<std::string> interval_row(const std::string& name, double point, Interval iv) {
  return {name, format_real(point), format_real(iv.lower), format_real(iv.upper)};
}

// ---- commands ----

void cmd_simulate(const ArgMap& args, std::ostream& log) {
  RunRecord rec("simulate", args, need(args, "out"));
  const DgpKind kind = parse_dgp(need(args, "dgp"));
  const std::size_t n = static_cast<std::size_t>(parse_uint(need(args, "n"), "--n"));
  const std::uint64_t seed = parse_uint(need(args, "seed"), "--seed");
  DgpOptions opts;
  if (auto v = opt(args, "literal_parametric_scale")) opts.literal_parametric_scale = parse_bool(*v, "--literal-parametric-scale");
  Random rng(derive_seed(seed, stream::simulate));
  const SimulatedData sim = simulate(kind, n, rng, opts);

  DataSchema schema;
  schema.covariates = sim.data.schema();
  write_dataset(rec.path("data.csv"), sim.data, schema);
  write_schema(rec.path("schema.txt"), schema);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < n; ++i)
    rows.push_back({std::to_string(i), std::to_string(sim.cluster[i]), format_real(sim.propensity[i]),
                    format_real(sim.zero_prob[i])});
  write_csv(rec.path("truth.csv"), {"subject", "cluster", "propensity", "zero_prob"}, rows);

  double zeros = 0.0;
  for (int z : sim.data.z()) zeros += z;
  log << "simulated " << n << " subjects (" << to_string(kind) << "), zero share " << zeros / n << "\n";
  if (auto v = opt(args, "oracle_draws")) {
    const std::size_t draws = static_cast<std::size_t>(parse_uint(*v, "--oracle-draws"));
    const PsiOracle o = true_psi(kind, draws, derive_seed(seed, stream::oracle), opts);
    write_csv(rec.path("psi.csv"), {"estimator", "value", "se"},
              {{"sampled", format_real(o.sampled), format_real(o.sampled_se)},
               {"conditional", format_real(o.conditional), ""}});
    log << "true effect " << o.sampled << " (se " << o.sampled_se << "), conditional-mean " << o.conditional << "\n";
  }
  rec.finish();
}

void cmd_fit(const ArgMap& args, std::ostream& log) {
  RunRecord rec("fit", args, need(args, "out"));
  const fs::path data_path = need(args, "data");
  const fs::path schema_path = need(args, "schema");
  const DataSchema schema = read_schema(schema_path);
  const Dataset data = read_dataset(data_path, schema);
  rec.input_file("data", data_path);
  rec.input_file("schema", schema_path);

  FitSettings fit;
  load_config(args, rec, [&](KeyValues& kv) { apply_fit_keys(kv, fit); });
  if (auto s = opt(args, "seed")) fit.sampler.seed = parse_uint(*s, "--seed");
  rec.config(describe(fit));

  TraceBundle b;
  b.schema = schema;
  b.prior = empirical_prior(data, fit.calibration);
  b.concentration = fit.concentration;
  b.trace = run_sampler(data, b.prior, b.concentration, fit.sampler);
  write_trace_dir(rec.dir(), b, data);
  for (const char* f : {"schema.txt", "prior.txt", "trace.csv", "data.csv", "acceptance.csv"}) rec.output(f);

  std::vector<std::vector<std::string>> rows;
  for (const auto& [k, count] : cluster_count_distribution(b.trace))
    rows.push_back({std::to_string(k), std::to_string(count)});
  write_csv(rec.path("cluster_counts.csv"), {"clusters", "draws"}, rows);

  const auto& acc = b.trace.acceptance;
  log << "fit " << data.size() << " subjects, " << b.trace.size() << " draws retained; acceptance gamma "
      << acc.gamma_rate() << ", eta " << acc.eta_rate() << ", alpha " << acc.alpha_rate() << "\n";
  rec.finish();
}

void cmd_relabel(const ArgMap& args, std::ostream& log) {
  RunRecord rec("relabel", args, need(args, "out"));
  const Fitted f = load_fitted(args, rec);
  ModeMatrixOptions mo;
  if (auto t = opt(args, "threads")) mo.threads = static_cast<std::size_t>(parse_uint(*t, "--threads"));
  if (auto t = opt(args, "max_draws")) mo.max_draws = static_cast<std::size_t>(parse_uint(*t, "--max-draws"));
  if (auto t = opt(args, "seed")) mo.seed = parse_uint(*t, "--seed");
  double edge_min = 0.0;
  if (auto t = opt(args, "edge_min")) edge_min = parse_real(*t, "--edge-min");

  const auto& trace = f.bundle.trace;
  AdjacencySummary s = select_mode_partition(trace, posterior_mode_matrix(trace, mo));
  const auto n = static_cast<Eigen::Index>(trace.n_subjects());
  {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index j = 0; j < n; ++j) header.push_back("s" + std::to_string(j));
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<std::string> r;
      for (Eigen::Index j = 0; j < n; ++j) r.push_back(format_real(s.mode_matrix(i, j)));
      rows.push_back(std::move(r));
    }
    write_csv(rec.path("mode_matrix.csv"), header, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = s.mode_matrix(i, j);
        if (v > 0.0 && v >= edge_min) rows.push_back({std::to_string(i), std::to_string(j), format_real(v)});
      }
    write_csv(rec.path("edges.csv"), {"i", "j", "frequency"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < s.hard_labels.size(); ++i)
      rows.push_back({std::to_string(i), std::to_string(s.hard_labels[i])});
    write_csv(rec.path("labels.csv"), {"subject", "cluster"}, rows);
  }
  {
    const auto profile = cluster_profile(*f.data, s.hard_labels);
    std::vector<std::string> header{"cluster", "size", "mean_outcome", "prop_zero", "prop_treated"};
    const auto& cov = f.data->schema();
    for (const auto& spec : cov.entries()) {
      if (spec.kind == CovariateKind::categorical)
        for (int l = 0; l < spec.levels; ++l) header.push_back(spec.name + "=" + std::to_string(l));
      else
        header.push_back(spec.name);
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : profile) {
      std::vector<std::string> r{std::to_string(p.label), std::to_string(p.size), format_real(p.mean_outcome),
                                 format_real(p.prop_zero), format_real(p.prop_treated)};
      for (const auto& v : p.covariates)
        for (double x : v) r.push_back(format_real(x));
      rows.push_back(std::move(r));
    }
    write_csv(rec.path("profile.csv"), header, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [k, count] : cluster_count_distribution(trace))
      rows.push_back({std::to_string(k), std::to_string(count)});
    write_csv(rec.path("cluster_counts.csv"), {"clusters", "draws"}, rows);
  }
  write_csv(rec.path("summary.csv"), {"selected_draw", "iteration", "distance", "clusters"},
            {{std::to_string(s.selected_draw), std::to_string(trace.draws[s.selected_draw].iteration),
              format_real(s.distance), std::to_string(s.num_clusters)}});
  log << "mode partition: draw " << s.selected_draw << " with " << s.num_clusters << " clusters\n";
  rec.finish();
}

void cmd_standardize(const ArgMap& args, std::ostream& log) {
  RunRecord rec("standardize", args, need(args, "out"));
  const Fitted f = load_fitted(args, rec);
  const StandardizationConfig cfg = standardization_from(args, rec);
  const CausalResults r = estimate_effects(f.bundle.trace, f.bundle.prior, cfg, &*f.data);

  write_csv(rec.path("effects.csv"), {"quantity", "point", "lower", "upper"},
            {interval_row("ate", r.psi, r.psi_interval), interval_row("mean_a0", mean_of_vec(r.mean0), r.mean0_interval),
             interval_row("mean_a1", mean_of_vec(r.mean1), r.mean1_interval),
             interval_row("risk_ratio_zero", r.risk_ratio, r.risk_ratio_interval),
             interval_row("risk_ratio_zero_per_draw_mean", r.risk_ratio_mean, r.risk_ratio_interval),
             {"median_effect", format_real(r.median_effect), "", ""}});
  std::vector<std::vector<std::string>> q;
  for (const auto& e : r.quantile_effects)
    q.push_back({format_real(e.q), format_real(e.value0), format_real(e.value1), format_real(e.effect)});
  write_csv(rec.path("quantiles.csv"), {"q", "a0", "a1", "effect"}, q);

  std::vector<std::vector<std::string>> draws;
  for (std::size_t t = 0; t < r.mean0.size(); ++t)
    draws.push_back({std::to_string(t), std::to_string(f.bundle.trace.draws[t].iteration),
                     format_real(f.bundle.trace.draws[t].state.alpha), format_real(r.mean0[t]), format_real(r.mean1[t]),
                     format_real(r.zero0[t]), format_real(r.zero1[t]), format_real(r.mean1[t] - r.mean0[t])});
  write_csv(rec.path("draws.csv"), {"draw", "iteration", "alpha", "mean_a0", "mean_a1", "zero_a0", "zero_a1", "difference"},
            draws);
  std::vector<std::vector<std::string>> pred;
  const std::size_t reps = cfg.predictive_per_draw;
  for (std::size_t k = 0; k < r.pred0.size(); ++k)
    pred.push_back({std::to_string(k / reps), format_real(r.pred0[k]), format_real(r.pred1[k])});
  write_csv(rec.path("predictive.csv"), {"draw", "y_a0", "y_a1"}, pred);
  std::vector<std::vector<std::string>> cons;
  for (int a = 0; a < 2; ++a) {
    const auto& c = r.consistency[a];
    cons.push_back({std::to_string(a), format_real(c.standardized), format_real(c.predictive), format_real(c.se)});
  }
  write_csv(rec.path("consistency.csv"), {"arm", "standardized_mean", "predictive_mean", "se"}, cons);

  log << "average effect " << r.psi << " [" << r.psi_interval.lower << ", " << r.psi_interval.upper
      << "], median effect " << r.median_effect << ", zero risk ratio " << r.risk_ratio << "\n";
  rec.finish();
}

void cmd_propensity(const ArgMap& args, std::ostream& log) {
  RunRecord rec("propensity", args, need(args, "out"));
  const Fitted f = load_fitted(args, rec);
  const StandardizationConfig cfg = standardization_from(args, rec);
  const PropensityResult p = propensity_scores(f.bundle.trace, *f.data, f.bundle.prior, cfg);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < p.score.size(); ++i)
    rows.push_back({std::to_string(i), std::to_string(p.arm[i]), format_real(p.score[i]), format_real(p.mc_se[i])});
  write_csv(rec.path("propensity.csv"), {"subject", "arm", "score", "mc_se"}, rows);
  double lo = 1.0, hi = 0.0;
  for (double s : p.score) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  log << "propensity scores for " << p.score.size() << " subjects in [" << lo << ", " << hi << "]\n";
  rec.finish();
}

void cmd_ppc(const ArgMap& args, std::ostream& log) {
  RunRecord rec("ppc", args, need(args, "out"));
  const Fitted f = load_fitted(args, rec);
  const StandardizationConfig cfg = standardization_from(args, rec);
  std::size_t reps = 100;
  if (auto v = opt(args, "replicates")) reps = static_cast<std::size_t>(parse_uint(*v, "--replicates"));
  const QQTable t = predictive_qq(f.bundle.trace, *f.data, f.bundle.prior, reps, cfg);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < t.levels.size(); ++k)
    rows.push_back({format_real(t.levels[k]), format_real(t.observed[k]), format_real(t.mean[k])});
  write_csv(rec.path("qq.csv"), {"level", "observed", "predictive_mean"}, rows);
  std::vector<std::string> header{"replicate"};
  for (double q : t.levels) header.push_back("q" + format_real(q));
  std::vector<std::vector<std::string>> reps_rows;
  for (std::size_t r = 0; r < t.replicates.size(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    for (double v : t.replicates[r]) row.push_back(format_real(v));
    reps_rows.push_back(std::move(row));
  }
  write_csv(rec.path("qq_replicates.csv"), header, reps_rows);
  log << "predictive check: " << reps << " replicates of " << f.data->size() << " subjects\n";
  rec.finish();
}

void cmd_experiment(const ArgMap& args, std::ostream& log) {
  RunRecord rec("experiment", args, need(args, "out"));
  ExperimentConfig cfg;
  load_config(args, rec, [&](KeyValues& kv) { apply_experiment_keys(kv, cfg); });
  if (auto t = opt(args, "threads")) cfg.threads = static_cast<std::size_t>(parse_uint(*t, "--threads"));
  cfg.validate();
  auto effective = describe(cfg);
  rec.config(effective);

  // Thread count does not change any result, so it stays out of the fingerprint.
  std::string canonical;
  for (const auto& [k, v] : effective)
    if (k != "threads") canonical += k + "=" + v + "\n";
  CheckpointOptions cp;
  cp.path = rec.dir() / "checkpoint.csv";
  cp.fingerprint = sha256_text(canonical);
  if (auto r = opt(args, "resume")) cp.resume = parse_bool(*r, "--resume");

  const ExperimentReport rep = run_experiment(cfg, &cp, [&](const ReplicateResult& r, std::size_t done, std::size_t total) {
    log << "replicate " << r.index << " (" << done << "/" << total << "): estimate " << r.point << " ["
        << r.lower << ", " << r.upper << "] in " << r.seconds << " s\n"
        << std::flush;
  });

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.replicates)
    rows.push_back({std::to_string(r.index), std::to_string(r.seed), format_real(r.point), format_real(r.lower),
                    format_real(r.upper), format_real(r.mean_clusters),
                    r.lower <= rep.true_psi && rep.true_psi <= r.upper ? "1" : "0"});
  write_csv(rec.path("replicates.csv"), {"replicate", "seed", "estimate", "lower", "upper", "mean_clusters", "covers"},
            rows);
  write_csv(rec.path("report.csv"), {"dgp", "n", "datasets", "true_effect", "bias", "coverage", "interval_width"},
            {{to_string(cfg.dgp), std::to_string(cfg.n), std::to_string(rep.replicates.size()),
              format_real(rep.true_psi), format_real(rep.relative_bias), format_real(rep.coverage),
              format_real(rep.mean_width)}});
  log << "true effect " << rep.true_psi << ": relative bias " << rep.relative_bias << ", coverage " << rep.coverage
      << ", mean width " << rep.mean_width << " (" << rep.resumed << " replicates resumed)\n";
  rec.finish();
}

void run_dispatch(const std::string& command, const ArgMap& args, std::ostream& log);

void cmd_rerun(const ArgMap& args, std::ostream& log) {
  const fs::path manifest_path = need(args, "manifest");
  const fs::path out = need(args, "out");
  const Manifest m = Manifest::read(fs::is_directory(manifest_path) ? manifest_path / "manifest.txt" : manifest_path);
  const auto command = m.get("run", "command");
  if (!command || *command == "rerun") throw Error(ErrorKind::resume, "manifest does not name a replayable command");

  ArgMap replay;
  if (const auto* s = m.section("args"))
    for (const auto& [k, v] : *s) replay[k] = v;
  replay.erase("resume");
  replay["out"] = out.string();

  // Inputs must be byte-identical to the recorded ones.
  if (const auto* s = m.section("inputs")) {
    for (const auto& [name, digest] : *s) {
      const auto slash = name.find('/');
      const std::string arg = name.substr(0, slash);
      const auto it = replay.find(arg);
      if (it == replay.end()) throw Error(ErrorKind::resume, "manifest input '" + name + "' has no matching argument");
      const fs::path p = slash == std::string::npos ? fs::path(it->second) : fs::path(it->second) / name.substr(slash + 1);
      if (!fs::exists(p)) throw Error(ErrorKind::resume, "recorded input " + p.string() + " no longer exists");
      if (sha256_file(p) != digest) throw Error(ErrorKind::resume, "input " + p.string() + " changed since the run");
    }
  }

  run_dispatch(*command, replay, log);

  const Manifest fresh = Manifest::read(out / "manifest.txt");
  std::size_t mismatches = 0, compared = 0;
  if (const auto* s = m.section("outputs")) {
    for (const auto& [file, digest] : *s) {
      ++compared;
      const auto now = fresh.get("outputs", file);
      if (!now || *now != digest) {
        ++mismatches;
        log << "differs: " << file << "\n";
      }
    }
  }
  if (mismatches) throw Error(ErrorKind::resume, std::to_string(mismatches) + " of " + std::to_string(compared) +
                                                      " outputs differ from the recorded run");
  log << "rerun of " << *command << ": all " << compared << " outputs identical\n";
}

void run_dispatch(const std::string& command, const ArgMap& args, std::ostream& log) {
  if (command == "simulate") return cmd_simulate(args, log);
  if (command == "fit") return cmd_fit(args, log);
  if (command == "relabel") return cmd_relabel(args, log);
  if (command == "standardize") return cmd_standardize(args, log);
  if (command == "propensity") return cmd_propensity(args, log);
  if (command == "ppc") return cmd_ppc(args, log);
  if (command == "experiment") return cmd_experiment(args, log);
  if (command == "rerun") return cmd_rerun(args, log);
  throw usage_error("unknown command '" + command + "'");
}

}  // namespace

void run_command(const std::string& command, const ArgMap& args, std::ostream& log) {
  // Path arguments are recorded absolute so a manifest replays from any directory.
  ArgMap normalized = args;
  for (const char* key : {"data", "schema", "config", "trace", "manifest"})
    if (auto it = normalized.find(key); it != normalized.end() && !it->second.empty()) it->second = abs_path(it->second);
  run_dispatch(command, normalized, log);
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config: return 2;
    case ErrorKind::data:
    case ErrorKind::schema: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::resume: return 5;
  }
  return 1;
}

}  // namespace zidp

#include "zidp/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zidp/error.hpp"

namespace zidp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

// Full-string numeric parse; false on trailing garbage or non-finite values.
bool to_real(std::string_view s, double& v) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }

std::string join_reals(const Vector& v) {
  std::string s;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k) s += ' ';
    s += format_real(v[k]);
  }
  return s;
}

Vector parse_vector(const std::string& text, int dim, const std::string& what) {
  const auto w = words(text);
  if (static_cast<int>(w.size()) != dim)
    throw config_error(what + " needs " + std::to_string(dim) + " values, got " + std::to_string(w.size()));
  Vector v(dim);
  for (int k = 0; k < dim; ++k) v[k] = parse_real(w[static_cast<std::size_t>(k)], what);
  return v;
}

void take_real(KeyValues& kv, const std::string& key, double& out) {
  if (auto v = kv.take(key)) out = parse_real(*v, key);
}
void take_size(KeyValues& kv, const std::string& key, std::size_t& out) {
  if (auto v = kv.take(key)) out = static_cast<std::size_t>(parse_uint(*v, key));
}
void take_u64(KeyValues& kv, const std::string& key, std::uint64_t& out) {
  if (auto v = kv.take(key)) out = parse_uint(*v, key);
}
void take_bool(KeyValues& kv, const std::string& key, bool& out) {
  if (auto v = kv.take(key)) out = parse_bool(*v, key);
}

const char* bool_text(bool b) { return b ? "true" : "false"; }

const char* alpha_mode_name(ConcentrationSpec::Mode m) {
  switch (m) {
    case ConcentrationSpec::Mode::fixed: return "fixed";
    case ConcentrationSpec::Mode::gamma_prior: return "gamma";
    case ConcentrationSpec::Mode::inverse_gamma_prior: return "inverse_gamma";
  }
  return "gamma";
}

void apply_alpha_keys(KeyValues& kv, ConcentrationSpec& c) {
  if (auto v = kv.take("alpha_prior")) {
    if (*v == "fixed")
      c.mode = ConcentrationSpec::Mode::fixed;
    else if (*v == "gamma")
      c.mode = ConcentrationSpec::Mode::gamma_prior;
    else if (*v == "inverse_gamma")
      c.mode = ConcentrationSpec::Mode::inverse_gamma_prior;
    else
      throw config_error("alpha_prior must be fixed, gamma or inverse_gamma, got '" + *v + "'");
  }
  take_real(kv, "alpha", c.alpha);
  take_real(kv, "alpha_shape", c.shape);
  take_real(kv, "alpha_rate", c.rate);
  take_real(kv, "alpha_jump_sd", c.jump_sd);
}

void describe_alpha(const ConcentrationSpec& c, std::vector<std::pair<std::string, std::string>>& out) {
  out.emplace_back("alpha_prior", alpha_mode_name(c.mode));
  out.emplace_back("alpha", format_real(c.alpha));
  out.emplace_back("alpha_shape", format_real(c.shape));
  out.emplace_back("alpha_rate", format_real(c.rate));
  out.emplace_back("alpha_jump_sd", format_real(c.jump_sd));
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& text, const std::string& what) {
  double v = 0.0;
  if (!to_real(trim(text), v)) throw config_error(what + ": '" + text + "' is not a finite number");
  return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw config_error(what + ": '" + text + "' is not a non-negative integer");
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw config_error(what + ": '" + text + "' is not a boolean");
}

// ---- KeyValues ----

KeyValues KeyValues::parse(const std::string& text, const std::string& origin,
                           const std::vector<std::string>& allow_repeat) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw config_error(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw config_error(where + ": empty key");
    const bool repeatable = std::find(allow_repeat.begin(), allow_repeat.end(), key) != allow_repeat.end();
    if (!repeatable && kv.has(key)) throw config_error(where + ": duplicate key '" + key + "'");
    kv.entries_.emplace_back(std::move(key), std::move(value));
    kv.used_.push_back(false);
  }
  return kv;
}

KeyValues KeyValues::load(const fs::path& path, const std::vector<std::string>& allow_repeat) {
  return parse(read_text(path), path.string(), allow_repeat);
}

bool KeyValues::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

std::optional<std::string> KeyValues::take(const std::string& key) {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (entries_[k].first == key) {
      used_[k] = true;
      return entries_[k].second;
    }
  }
  return std::nullopt;
}

std::vector<std::string> KeyValues::take_all(const std::string& key) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (entries_[k].first == key) {
      used_[k] = true;
      out.push_back(entries_[k].second);
    }
  }
  return out;
}

void KeyValues::reject_unused() const {
  for (std::size_t k = 0; k < entries_.size(); ++k)
    if (!used_[k]) throw config_error(origin_ + ": unknown key '" + entries_[k].first + "'");
}

// ---- schema and data ----

DataSchema read_schema(const fs::path& path) {
  KeyValues kv = KeyValues::load(path, {"covariate"});
  DataSchema s;
  auto schema_error = [&](const std::string& msg) { return Error(ErrorKind::schema, path.string() + ": " + msg); };
  if (auto v = kv.take("outcome")) s.outcome = *v;
  if (auto v = kv.take("treatment")) s.treatment = *v;
  if (auto v = kv.take("zero_epsilon")) {
    double eps = 0.0;
    if (!to_real(*v, eps) || eps < 0.0) throw schema_error("zero_epsilon must be a non-negative number");
    s.zero_epsilon = eps;
  }
  std::vector<CovariateSpec> specs;
  for (const auto& line : kv.take_all("covariate")) {
    const auto w = words(line);
    if (w.size() < 2) throw schema_error("covariate needs a name and a kind: '" + line + "'");
    CovariateSpec spec;
    spec.name = w[0];
    if (w[1] == "continuous" && w.size() == 2) {
      spec.kind = CovariateKind::continuous;
    } else if (w[1] == "binary" && w.size() == 2) {
      spec.kind = CovariateKind::binary;
    } else if (w[1] == "categorical" && w.size() == 3) {
      spec.kind = CovariateKind::categorical;
      double levels = 0.0;
      if (!to_real(w[2], levels) || levels != std::floor(levels) || levels < 2 || levels > 1e6)
        throw schema_error("categorical covariate '" + spec.name + "' needs an integer level count >= 2");
      spec.levels = static_cast<int>(levels);
    } else {
      throw schema_error("cannot read covariate declaration '" + line +
                         "' (expected: name continuous | name binary | name categorical levels)");
    }
    specs.push_back(std::move(spec));
  }
  try {
    kv.reject_unused();
  } catch (const Error& e) {
    throw Error(ErrorKind::schema, e.what());
  }
  if (s.outcome == s.treatment) throw schema_error("outcome and treatment must be different columns");
  for (const auto& spec : specs)
    if (spec.name == s.outcome || spec.name == s.treatment)
      throw schema_error("covariate '" + spec.name + "' duplicates the outcome or treatment column");
  s.covariates = CovariateSchema(std::move(specs));
  return s;
}

void write_schema(const fs::path& path, const DataSchema& s) {
  auto out = open_out(path);
  out << "outcome = " << s.outcome << '\n' << "treatment = " << s.treatment << '\n';
  for (const auto& spec : s.covariates.entries()) {
    out << "covariate = " << spec.name << ' ' << to_string(spec.kind);
    if (spec.kind == CovariateKind::categorical) out << ' ' << spec.levels;
    out << '\n';
  }
  out << "zero_epsilon = " << format_real(s.zero_epsilon) << '\n';
}

Dataset read_dataset(const fs::path& data_path, const DataSchema& schema) {
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + data_path.string());
  const std::string file = data_path.string();
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw Error(ErrorKind::data, file + ": data file is empty");
  const auto header = split(line, ',');
  for (std::size_t a = 0; a < header.size(); ++a)
    for (std::size_t b = a + 1; b < header.size(); ++b)
      if (header[a] == header[b]) throw Error(ErrorKind::data, file + ": duplicate column '" + header[a] + "'");

  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::schema, file + ": unknown column '" + name + "' (not in header)");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = column(schema.outcome);
  const std::size_t a_col = column(schema.treatment);
  const auto& cov = schema.covariates;
  std::vector<std::size_t> l_cols;
  for (const auto& spec : cov.entries()) l_cols.push_back(column(spec.name));

  std::vector<double> y;
  std::vector<int> a;
  std::vector<double> l_flat;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = file + ": row " + std::to_string(row);
    if (cells.size() != header.size())
      throw Error(ErrorKind::data, where + " has " + std::to_string(cells.size()) + " cells, header has " +
                                       std::to_string(header.size()));
    auto number = [&](std::size_t col) {
      double v = 0.0;
      if (!to_real(cells[col], v))
        throw Error(ErrorKind::data,
                    where + ", column '" + header[col] + "': non-numeric value '" + cells[col] + "'");
      return v;
    };
    y.push_back(number(y_col));
    const double av = number(a_col);
    if (av != 0.0 && av != 1.0)
      throw Error(ErrorKind::data,
                  where + ", column '" + header[a_col] + "': treatment must be 0 or 1, got '" + cells[a_col] + "'");
    a.push_back(static_cast<int>(av));
    for (std::size_t k = 0; k < l_cols.size(); ++k) {
      const double v = number(l_cols[k]);
      try {
        check_covariate_value(cov[k], v);
      } catch (const Error& e) {
        throw Error(ErrorKind::data, where + ", column '" + header[l_cols[k]] + "': " + e.what());
      }
      l_flat.push_back(v);
    }
  }
  if (y.empty()) throw Error(ErrorKind::data, file + ": data file has a header but no rows");
  RowMatrix l(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(cov.size()));
  std::copy(l_flat.begin(), l_flat.end(), l.data());
  return Dataset(cov, std::move(y), std::move(a), std::move(l), schema.zero_epsilon);
}

void write_dataset(const fs::path& path, const Dataset& data, const DataSchema& schema) {
  auto out = open_out(path);
  out << schema.outcome << ',' << schema.treatment;
  for (const auto& spec : data.schema().entries()) out << ',' << spec.name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_real(data.y(i)) << ',' << data.a(i);
    for (double v : data.l(i)) out << ',' << format_real(v);
    out << '\n';
  }
}

// ---- configs ----

void apply_fit_keys(KeyValues& kv, FitSettings& s, bool embedded) {
  auto& c = s.sampler;
  take_size(kv, "iterations", c.iterations);
  take_size(kv, "burn_in", c.burn_in);
  take_size(kv, "thin", c.thin);
  take_size(kv, "init_clusters", c.init_clusters);
  take_size(kv, "aux_clusters", c.aux_clusters);
  take_real(kv, "jump_sd_gamma", c.jump_sd_gamma);
  take_real(kv, "jump_sd_eta", c.jump_sd_eta);
  take_bool(kv, "per_sweep_proposal", c.per_sweep_proposal);
  take_bool(kv, "empirical_init", c.empirical_init);
  take_bool(kv, "freeze_logistic", c.freeze_logistic);
  if (!embedded) take_u64(kv, "seed", c.seed);
  apply_alpha_keys(kv, s.concentration);
  auto& p = s.calibration;
  take_real(kv, "beta_cov_scale", p.beta_cov_scale);
  take_real(kv, "logistic_prior_var", p.logistic_prior_var);
  take_real(kv, "phi_shape", p.phi_shape);
  take_real(kv, "covariate_mean_var_scale", p.covariate_mean_var_scale);
  take_real(kv, "covariate_var_shape", p.covariate_var_shape);
  take_real(kv, "covariate_var_rate_factor", p.covariate_var_rate_factor);
  take_real(kv, "beta_a", p.beta_a);
  take_real(kv, "beta_b", p.beta_b);
  take_real(kv, "dirichlet_concentration", p.dirichlet_concentration);
}

void apply_standardization_keys(KeyValues& kv, StandardizationConfig& c, bool embedded) {
  take_size(kv, "n_prior_mc", c.n_prior_mc);
  if (auto v = kv.take("quantiles")) {
    c.quantiles.clear();
    for (const auto& q : split(*v, ','))
      if (!q.empty()) c.quantiles.push_back(parse_real(q, "quantiles"));
  }
  take_size(kv, "predictive_per_draw", c.predictive_per_draw);
  take_bool(kv, "plug_in_covariates", c.plug_in_covariates);
  take_bool(kv, "predictive_intervals", c.predictive_intervals);
  take_real(kv, "interval_level", c.interval_level);
  if (!embedded) {
    take_size(kv, "threads", c.threads);
    take_u64(kv, "seed", c.seed);
  }
}

void apply_experiment_keys(KeyValues& kv, ExperimentConfig& c) {
  if (auto v = kv.take("dgp")) c.dgp = parse_dgp(*v);
  take_bool(kv, "literal_parametric_scale", c.dgp_options.literal_parametric_scale);
  take_size(kv, "n", c.n);
  take_size(kv, "n_datasets", c.n_datasets);
  take_u64(kv, "seed", c.seed);
  take_size(kv, "oracle_draws", c.oracle_draws);
  if (auto v = kv.take("true_psi")) c.true_psi = parse_real(*v, "true_psi");
  take_size(kv, "threads", c.threads);
  FitSettings fit{c.sampler, c.concentration, c.calibration};
  apply_fit_keys(kv, fit, true);
  c.sampler = fit.sampler;
  c.concentration = fit.concentration;
  c.calibration = fit.calibration;
  apply_standardization_keys(kv, c.standardization, true);
}

std::vector<std::pair<std::string, std::string>> describe(const FitSettings& s) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto& c = s.sampler;
  out.emplace_back("iterations", std::to_string(c.iterations));
  out.emplace_back("burn_in", std::to_string(c.burn_in));
  out.emplace_back("thin", std::to_string(c.thin));
  out.emplace_back("init_clusters", std::to_string(c.init_clusters));
  out.emplace_back("aux_clusters", std::to_string(c.aux_clusters));
  out.emplace_back("jump_sd_gamma", format_real(c.jump_sd_gamma));
  out.emplace_back("jump_sd_eta", format_real(c.jump_sd_eta));
  out.emplace_back("per_sweep_proposal", bool_text(c.per_sweep_proposal));
  out.emplace_back("empirical_init", bool_text(c.empirical_init));
  out.emplace_back("freeze_logistic", bool_text(c.freeze_logistic));
  out.emplace_back("seed", std::to_string(c.seed));
  describe_alpha(s.concentration, out);
  const auto& p = s.calibration;
  out.emplace_back("beta_cov_scale", format_real(p.beta_cov_scale));
  out.emplace_back("logistic_prior_var", format_real(p.logistic_prior_var));
  out.emplace_back("phi_shape", format_real(p.phi_shape));
  out.emplace_back("covariate_mean_var_scale", format_real(p.covariate_mean_var_scale));
  out.emplace_back("covariate_var_shape", format_real(p.covariate_var_shape));
  out.emplace_back("covariate_var_rate_factor", format_real(p.covariate_var_rate_factor));
  out.emplace_back("beta_a", format_real(p.beta_a));
  out.emplace_back("beta_b", format_real(p.beta_b));
  out.emplace_back("dirichlet_concentration", format_real(p.dirichlet_concentration));
  return out;
}

std::vector<std::pair<std::string, std::string>> describe(const StandardizationConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("n_prior_mc", std::to_string(c.n_prior_mc));
  std::string q;
  for (double v : c.quantiles) q += (q.empty() ? "" : ",") + format_real(v);
  out.emplace_back("quantiles", q);
  out.emplace_back("predictive_per_draw", std::to_string(c.predictive_per_draw));
  out.emplace_back("plug_in_covariates", bool_text(c.plug_in_covariates));
  out.emplace_back("predictive_intervals", bool_text(c.predictive_intervals));
  out.emplace_back("interval_level", format_real(c.interval_level));
  out.emplace_back("threads", std::to_string(c.threads));
  out.emplace_back("seed", std::to_string(c.seed));
  return out;
}

std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("dgp", to_string(c.dgp));
  out.emplace_back("literal_parametric_scale", bool_text(c.dgp_options.literal_parametric_scale));
  out.emplace_back("n", std::to_string(c.n));
  out.emplace_back("n_datasets", std::to_string(c.n_datasets));
  out.emplace_back("seed", std::to_string(c.seed));
  out.emplace_back("oracle_draws", std::to_string(c.oracle_draws));
  if (c.true_psi) out.emplace_back("true_psi", format_real(*c.true_psi));
  out.emplace_back("threads", std::to_string(c.threads));
  for (auto& kv : describe(FitSettings{c.sampler, c.concentration, c.calibration}))
    if (kv.first != "seed") out.push_back(kv);
  for (auto& kv : describe(c.standardization))
    if (kv.first != "seed" && kv.first != "threads") out.push_back(kv);
  return out;
}

// ---- prior ----

void write_prior(const fs::path& path, const BasePrior& prior, const ConcentrationSpec& conc,
                 const CovariateSchema& schema) {
  auto out = open_out(path);
  out << "beta_mean = " << join_reals(prior.beta.mean) << '\n';
  out << "beta_var = " << join_reals(prior.beta.variance) << '\n';
  out << "phi_shape = " << format_real(prior.phi.shape) << '\n';
  out << "phi_rate = " << format_real(prior.phi.rate) << '\n';
  out << "gamma_mean = " << join_reals(prior.gamma.mean) << '\n';
  out << "gamma_var = " << join_reals(prior.gamma.variance) << '\n';
  out << "eta_mean = " << join_reals(prior.eta.mean) << '\n';
  out << "eta_var = " << join_reals(prior.eta.variance) << '\n';
  for (std::size_t k = 0; k < schema.size(); ++k) {
    out << "covariate = " << schema[k].name;
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ContinuousCovariatePrior>) {
            out << " continuous " << format_real(p.mean0) << ' ' << format_real(p.var0) << ' '
                << format_real(p.variance.shape) << ' ' << format_real(p.variance.rate);
          } else if constexpr (std::is_same_v<T, BetaPrior>) {
            out << " binary " << format_real(p.a) << ' ' << format_real(p.b);
          } else {
            out << " categorical";
            for (double c : p.concentration) out << ' ' << format_real(c);
          }
        },
        prior.covariates[k]);
    out << '\n';
  }
  std::vector<std::pair<std::string, std::string>> alpha;
  describe_alpha(conc, alpha);
  for (const auto& [k, v] : alpha) out << k << " = " << v << '\n';
}

std::pair<BasePrior, ConcentrationSpec> read_prior(const fs::path& path, const CovariateSchema& schema) {
  KeyValues kv = KeyValues::load(path, {"covariate"});
  const int d = schema.outcome_dim();
  const int dm = schema.treatment_dim();
  auto need = [&](const std::string& key) {
    auto v = kv.take(key);
    if (!v) throw config_error(path.string() + ": missing '" + key + "'");
    return *v;
  };
  BasePrior prior;
  prior.beta.mean = parse_vector(need("beta_mean"), d, "beta_mean");
  prior.beta.variance = parse_vector(need("beta_var"), d, "beta_var");
  prior.phi.shape = parse_real(need("phi_shape"), "phi_shape");
  prior.phi.rate = parse_real(need("phi_rate"), "phi_rate");
  prior.gamma.mean = parse_vector(need("gamma_mean"), d, "gamma_mean");
  prior.gamma.variance = parse_vector(need("gamma_var"), d, "gamma_var");
  prior.eta.mean = parse_vector(need("eta_mean"), dm, "eta_mean");
  prior.eta.variance = parse_vector(need("eta_var"), dm, "eta_var");
  const auto covs = kv.take_all("covariate");
  if (covs.size() != schema.size()) throw config_error(path.string() + ": covariate prior count does not match schema");
  for (std::size_t k = 0; k < covs.size(); ++k) {
    const auto w = words(covs[k]);
    const auto& spec = schema[k];
    auto num = [&](std::size_t j) { return parse_real(w.at(j), "covariate prior for " + spec.name); };
    if (w.size() < 2 || w[0] != spec.name || w[1] != to_string(spec.kind))
      throw config_error(path.string() + ": covariate prior " + std::to_string(k) + " does not match the schema");
    switch (spec.kind) {
      case CovariateKind::continuous:
        if (w.size() != 6) throw config_error("continuous covariate prior needs 4 values");
        prior.covariates.emplace_back(ContinuousCovariatePrior{num(2), num(3), {num(4), num(5)}});
        break;
      case CovariateKind::binary:
        if (w.size() != 4) throw config_error("binary covariate prior needs 2 values");
        prior.covariates.emplace_back(BetaPrior{num(2), num(3)});
        break;
      case CovariateKind::categorical: {
        if (w.size() != static_cast<std::size_t>(spec.levels) + 2)
          throw config_error("categorical covariate prior needs one value per level");
        DirichletPrior dp;
        for (std::size_t j = 2; j < w.size(); ++j) dp.concentration.push_back(num(j));
        prior.covariates.emplace_back(std::move(dp));
        break;
      }
    }
  }
  ConcentrationSpec conc;
  apply_alpha_keys(kv, conc);
  kv.reject_unused();
  prior.validate(schema);
  conc.validate();
  return {prior, conc};
}

// ---- trace ----

void write_trace(const fs::path& path, const PosteriorTrace& trace) {
  auto out = open_out(path);
  std::string line;
  auto put = [&](double v) {
    line += ',';
    line += format_real(v);
  };
  auto put_vec = [&](const Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) put(v[k]);
  };
  for (const auto& draw : trace.draws) {
    const auto& s = draw.state;
    line = std::to_string(draw.iteration);
    put(s.alpha);
    line += ',' + std::to_string(s.size());
    for (ClusterId c : s.labels) line += ',' + std::to_string(c);
    line += ',' + std::to_string(s.num_clusters());
    for (const auto& [id, c] : s.clusters) {
      line += ',' + std::to_string(id);
      put_vec(c.params.beta);
      put(c.params.phi);
      put_vec(c.params.gamma);
      put_vec(c.params.eta);
      for (const auto& th : c.params.theta) {
        std::visit(
            [&](const auto& p) {
              using T = std::decay_t<decltype(p)>;
              if constexpr (std::is_same_v<T, ContinuousParam>) {
                put(p.mean);
                put(p.variance);
              } else if constexpr (std::is_same_v<T, BinaryParam>) {
                put(p.prob);
              } else {
                for (double q : p.probs) put(q);
              }
            },
            th);
      }
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

PosteriorTrace read_trace(const fs::path& path, const CovariateSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "no trace found: cannot open " + path.string());
  PosteriorTrace trace;
  trace.schema = schema;
  const int d = schema.outcome_dim();
  const int dm = schema.treatment_dim();
  std::string line;
  std::size_t line_no = 0;
  std::size_t n_expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto fail = [&](const std::string& what) {
      return Error(ErrorKind::data, path.string() + ": line " + std::to_string(line_no) + ": " + what);
    };
    auto next_field = [&]() -> std::string_view {
      if (p > end) throw fail("too few fields");
      const char* comma = std::find(p, end, ',');
      std::string_view f(p, static_cast<std::size_t>(comma - p));
      p = comma + 1;
      return f;
    };
    auto real = [&]() {
      double v = 0.0;
      const auto f = next_field();
      if (!to_real(f, v)) throw fail("bad number '" + std::string(f) + "'");
      return v;
    };
    auto integer = [&]() {
      std::uint64_t v = 0;
      const auto f = next_field();
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw fail("bad integer '" + std::string(f) + "'");
      return v;
    };
    auto vec = [&](int dim) {
      Vector v(dim);
      for (int k = 0; k < dim; ++k) v[k] = real();
      return v;
    };

    TraceDraw draw;
    draw.iteration = integer();
    ClusterState& s = draw.state;
    s.alpha = real();
    const std::size_t n = integer();
    if (n == 0) throw fail("zero subjects");
    if (n_expected == 0) n_expected = n;
    if (n != n_expected) throw fail("subject count differs from earlier draws");
    s.labels.resize(n);
    for (auto& c : s.labels) c = integer();
    const std::size_t k = integer();
    for (std::size_t j = 0; j < k; ++j) {
      const ClusterId id = integer();
      Cluster c;
      c.params.beta = vec(d);
      c.params.phi = real();
      c.params.gamma = vec(d);
      c.params.eta = vec(dm);
      for (std::size_t q = 0; q < schema.size(); ++q) {
        switch (schema[q].kind) {
          case CovariateKind::continuous: {
            ContinuousParam cp;
            cp.mean = real();
            cp.variance = real();
            c.params.theta.emplace_back(cp);
            break;
          }
          case CovariateKind::binary:
            c.params.theta.emplace_back(BinaryParam{real()});
            break;
          case CovariateKind::categorical: {
            CategoricalParam cp;
            for (int l = 0; l < schema[q].levels; ++l) cp.probs.push_back(real());
            c.params.theta.emplace_back(std::move(cp));
            break;
          }
        }
      }
      try {
        c.params.validate(schema);
      } catch (const Error& e) {
        throw fail(e.what());
      }
      if (!s.clusters.emplace(id, std::move(c)).second) throw fail("duplicate cluster id");
      s.next_id = std::max(s.next_id, id + 1);
    }
    if (p <= end) throw fail("trailing fields");
    for (ClusterId c : s.labels) {
      auto it = s.clusters.find(c);
      if (it == s.clusters.end()) throw fail("label refers to a missing cluster");
      ++it->second.count;
    }
    try {
      s.check_invariants();
    } catch (const Error& e) {
      throw fail(e.what());
    }
    trace.draws.push_back(std::move(draw));
  }
  return trace;
}

void write_trace_dir(const fs::path& dir, const TraceBundle& b, const Dataset& data) {
  fs::create_directories(dir);
  write_schema(dir / "schema.txt", b.schema);
  write_prior(dir / "prior.txt", b.prior, b.concentration, b.schema.covariates);
  write_trace(dir / "trace.csv", b.trace);
  write_dataset(dir / "data.csv", data, b.schema);
  const auto& a = b.trace.acceptance;
  write_csv(dir / "acceptance.csv", {"block", "proposed", "accepted", "rate"},
            {{"gamma", std::to_string(a.gamma_proposed), std::to_string(a.gamma_accepted), format_real(a.gamma_rate())},
             {"eta", std::to_string(a.eta_proposed), std::to_string(a.eta_accepted), format_real(a.eta_rate())},
             {"alpha", std::to_string(a.alpha_proposed), std::to_string(a.alpha_accepted),
              format_real(a.alpha_rate())}});
}

TraceBundle read_trace_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "no trace found: " + dir.string() + " is not a directory");
  if (!fs::exists(dir / "trace.csv")) throw Error(ErrorKind::io, "no trace found in " + dir.string());
  TraceBundle b;
  b.schema = read_schema(dir / "schema.txt");
  std::tie(b.prior, b.concentration) = read_prior(dir / "prior.txt", b.schema.covariates);
  b.trace = read_trace(dir / "trace.csv", b.schema.covariates);
  if (b.trace.empty()) throw Error(ErrorKind::io, "no trace found: " + (dir / "trace.csv").string() + " has no draws");
  return b;
}

// ---- digests and manifest ----

namespace {

std::string hex_digest(const unsigned char* md, unsigned len) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned k = 0; k < len; ++k) {
    s += hex[md[k] >> 4];
    s += hex[md[k] & 15];
  }
  return s;
}

}  // namespace

std::string sha256_text(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::io, "SHA-256 failed");
  return hex_digest(md, len);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return hex_digest(md, len);
}

void Manifest::set(const std::string& section, const std::string& key, const std::string& value) {
  auto it = std::find_if(sections.begin(), sections.end(), [&](const auto& s) { return s.first == section; });
  if (it == sections.end()) {
    sections.emplace_back(section, std::vector<std::pair<std::string, std::string>>{});
    it = std::prev(sections.end());
  }
  for (auto& [k, v] : it->second) {
    if (k == key) {
      v = value;
      return;
    }
  }
  it->second.emplace_back(key, value);
}

std::optional<std::string> Manifest::get(const std::string& section, const std::string& key) const {
  if (const auto* s = this->section(section))
    for (const auto& [k, v] : *s)
      if (k == key) return v;
  return std::nullopt;
}

const std::vector<std::pair<std::string, std::string>>* Manifest::section(const std::string& name) const {
  for (const auto& s : sections)
    if (s.first == name) return &s.second;
  return nullptr;
}

void Manifest::write(const fs::path& path) const {
  auto out = open_out(path);
  for (std::size_t k = 0; k < sections.size(); ++k) {
    if (k) out << '\n';
    out << '[' << sections[k].first << "]\n";
    for (const auto& [key, value] : sections[k].second) out << key << " = " << value << '\n';
  }
}

Manifest Manifest::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open manifest " + path.string());
  Manifest m;
  std::string line, current;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      current = t.substr(1, t.size() - 2);
      m.sections.emplace_back(current, std::vector<std::pair<std::string, std::string>>{});
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos || current.empty())
      throw Error(ErrorKind::resume, path.string() + ":" + std::to_string(line_no) + ": malformed manifest line");
    m.sections.back().second.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return m;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto out = open_out(path);
  auto put_row = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << r[k];
    out << '\n';
  };
  put_row(header);
  for (const auto& r : rows) put_row(r);
}

}  // namespace zidp

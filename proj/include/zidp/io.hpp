#ifndef ZIDP_IO_HPP
#define ZIDP_IO_HPP

// On-disk formats.
//
// Data: comma-separated with a header row. Schema file (key = value lines):
//   outcome = y
//   treatment = a
//   covariate = age continuous
//   covariate = stage categorical 4
//   zero_epsilon = 0
// Categorical cells hold level indices 0..levels-1.
//
// Config: flat "key = value" lines, '#' starts a comment. Every key must be
// consumed by the command reading it.
//
// Trace directory:
//   schema.txt   covariate schema of the fit
//   prior.txt    realized base prior and concentration settings
//   trace.csv    one line per retained draw:
//                iteration,alpha,n,c_1..c_n,K, then K blocks of
//                id,beta..,phi,gamma..,eta..,theta..
//                (continuous theta: mean,variance; binary: p; categorical: probs)
//   acceptance.csv
//   data.csv     the fitted data
// Reals are written with 17 significant digits.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zidp/experiment.hpp"
#include "zidp/model.hpp"
#include "zidp/prior.hpp"
#include "zidp/sampler.hpp"

namespace zidp {

namespace fs = std::filesystem;

// "%.17g".
std::string format_real(double v);

// ---- key = value files ----

class KeyValues {
 public:
  KeyValues() = default;
  // Duplicate keys are errors unless allow_repeat lists them.
  static KeyValues parse(const std::string& text, const std::string& origin,
                         const std::vector<std::string>& allow_repeat = {});
  static KeyValues load(const fs::path& path, const std::vector<std::string>& allow_repeat = {});

  bool has(const std::string& key) const;
  // Marks the key consumed. Throws Error(config) on a malformed value.
  std::optional<std::string> take(const std::string& key);
  std::vector<std::string> take_all(const std::string& key);
  // Throws Error(config) naming the first key nobody asked for.
  void reject_unused() const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
  const std::string& origin() const noexcept { return origin_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<bool> used_;
  std::string origin_;
};

double parse_real(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);

// ---- data and schema ----

struct DataSchema {
  std::string outcome = "y";
  std::string treatment = "a";
  CovariateSchema covariates;
  double zero_epsilon = 0.0;
};

DataSchema read_schema(const fs::path& path);
void write_schema(const fs::path& path, const DataSchema& schema);

// Errors carry the row (1-based, header = row 1) and column name.
Dataset read_dataset(const fs::path& data_path, const DataSchema& schema);
void write_dataset(const fs::path& path, const Dataset& data, const DataSchema& schema);

// ---- configs ----

struct FitSettings {
  SamplerConfig sampler;
  ConcentrationSpec concentration;
  CalibrationOptions calibration;
};

// With embedded set, seed and thread keys are left to the enclosing
// experiment config.
void apply_fit_keys(KeyValues& kv, FitSettings& s, bool embedded = false);
void apply_standardization_keys(KeyValues& kv, StandardizationConfig& c, bool embedded = false);
void apply_experiment_keys(KeyValues& kv, ExperimentConfig& c);

// Effective settings as key = value pairs, in documented key order.
std::vector<std::pair<std::string, std::string>> describe(const FitSettings& s);
std::vector<std::pair<std::string, std::string>> describe(const StandardizationConfig& c);
std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& c);

// ---- trace directory ----

void write_prior(const fs::path& path, const BasePrior& prior, const ConcentrationSpec& conc,
                 const CovariateSchema& schema);
std::pair<BasePrior, ConcentrationSpec> read_prior(const fs::path& path, const CovariateSchema& schema);

void write_trace(const fs::path& path, const PosteriorTrace& trace);
PosteriorTrace read_trace(const fs::path& path, const CovariateSchema& schema);

struct TraceBundle {
  DataSchema schema;
  BasePrior prior;
  ConcentrationSpec concentration;
  PosteriorTrace trace;
};

void write_trace_dir(const fs::path& dir, const TraceBundle& bundle, const Dataset& data);
// Throws Error(io) "no trace found" when the directory holds no trace.
TraceBundle read_trace_dir(const fs::path& dir);

// ---- manifest ----

std::string sha256_file(const fs::path& path);
std::string sha256_text(const std::string& text);

// INI-like: [section] headers followed by key = value lines.
struct Manifest {
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>* section(const std::string& name) const;

  void write(const fs::path& path) const;
  static Manifest read(const fs::path& path);
};

// Comma-joined header and rows; cells are written verbatim.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace zidp

#endif  // ZIDP_IO_HPP

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "zidp/commands.hpp"

namespace {

struct OptionSpec {
  const char* name;  // argument key; the flag is --name with '_' as '-'
  const char* help;
  bool required = false;
};

struct CommandSpec {
  const char* name;
  const char* help;
  std::vector<OptionSpec> options;
};

const std::vector<CommandSpec>& command_table() {
  static const std::vector<CommandSpec> table = {
      {"simulate",
       "Simulate a dataset from a built-in data-generating process",
       {{"dgp", "clustered | parametric | null", true},
        {"n", "number of subjects", true},
        {"seed", "master seed", true},
        {"out", "output directory", true},
        {"literal_parametric_scale", "use the product-scale parametric variant (true/false)"},
        {"oracle_draws", "also compute the true average effect by Monte Carlo"}}},
      {"fit",
       "Run the DP mixture sampler and write a trace directory",
       {{"data", "data CSV", true},
        {"schema", "schema file", true},
        {"config", "fit config file"},
        {"seed", "sampler seed (overrides config)"},
        {"out", "trace directory", true}}},
      {"relabel",
       "Posterior mode partition and cluster profiles",
       {{"trace", "trace directory", true},
        {"data", "data CSV (defaults to the copy in the trace)"},
        {"threads", "worker threads"},
        {"max_draws", "subsample this many draws for the mode matrix"},
        {"seed", "subsampling seed"},
        {"edge_min", "minimum co-clustering frequency written to edges.csv"},
        {"out", "output directory", true}}},
      {"standardize",
       "Causal effects by standardization over the posterior",
       {{"trace", "trace directory", true},
        {"data", "data CSV (defaults to the copy in the trace)"},
        {"config", "standardization config file"},
        {"threads", "worker threads"},
        {"out", "output directory", true}}},
      {"propensity",
       "Posterior propensity scores",
       {{"trace", "trace directory", true},
        {"data", "data CSV (defaults to the copy in the trace)"},
        {"config", "standardization config file"},
        {"threads", "worker threads"},
        {"out", "output directory", true}}},
      {"ppc",
       "Posterior predictive quantile check",
       {{"trace", "trace directory", true},
        {"data", "data CSV (defaults to the copy in the trace)"},
        {"config", "standardization config file"},
        {"replicates", "number of replicate datasets (default 100)"},
        {"threads", "worker threads"},
        {"out", "output directory", true}}},
      {"experiment",
       "Repeated simulate-fit-estimate study with checkpointing",
       {{"config", "experiment config file"},
        {"threads", "worker threads"},
        {"resume", "continue from out/checkpoint.csv (true/false)"},
        {"out", "output directory", true}}},
      {"rerun",
       "Replay a recorded run and verify its outputs are identical",
       {{"manifest", "manifest.txt or the directory holding it", true},
        {"out", "output directory for the replay", true}}},
  };
  return table;
}

std::string flag_name(const char* key) {
  std::string s = key;
  for (char& c : s)
    if (c == '_') c = '-';
  return "--" + s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-inflated Dirichlet process mixtures for causal effects"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ZIDP_VERSION);

  const auto& table = command_table();
  std::map<std::string, std::map<std::string, std::string>> values;
  std::vector<CLI::App*> subs;
  for (const auto& cmd : table) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& slot = values[cmd.name];
    for (const auto& o : cmd.options) {
      auto* opt = sub->add_option(flag_name(o.name), slot[o.name], o.help);
      if (o.required) opt->required();
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : zidp::exit_code(zidp::ErrorKind::usage);
  }

  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    const std::string name = table[k].name;
    zidp::ArgMap args;
    for (const auto& [key, v] : values[name])
      if (!v.empty()) args[key] = v;
    try {
      zidp::run_command(name, args, std::cerr);
      return 0;
    } catch (const zidp::Error& e) {
      std::cerr << "zidp " << name << ": " << e.what() << "\n";
      return zidp::exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "zidp " << name << ": " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}

// specgrid — tile-level spectrum-demand estimation pipeline.
//
// Subcommands mirror the pipeline stages; `all` chains proxy through
// explain. Exit codes: 0 ok, 1 usage, 2 data error, 3 invariant failure.

#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specgrid/errors.hpp"
#include "specgrid/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string inputs_dir, out_dir, mode, test_city;
  long seed = -1;
};

specgrid::RunConfig resolve_config(const CliOptions& opt) {
  specgrid::RunConfig config;
  if (!opt.config_path.empty())
    config = specgrid::load_config(opt.config_path);
  for (const std::string& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw specgrid::DataError("--set expects key=value, got '" + kv + "'");
    specgrid::apply_config_entry(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opt.inputs_dir.empty()) config.inputs_dir = opt.inputs_dir;
  if (!opt.out_dir.empty()) config.out_dir = opt.out_dir;
  if (!opt.mode.empty()) config.cv_mode = opt.mode;
  if (!opt.test_city.empty()) config.test_city = opt.test_city;
  if (opt.seed >= 0) {
    config.model.seed = static_cast<std::uint64_t>(opt.seed);
    config.synth.seed = static_cast<std::uint64_t>(opt.seed);
  }
  specgrid::validate_config(config);
  return config;
}

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("-c,--config", opt.config_path, "key=value config file");
  cmd->add_option("--set", opt.overrides,
                  "override a config key (key=value, repeatable)");
  cmd->add_option("--inputs-dir", opt.inputs_dir, "input data directory");
  cmd->add_option("--out-dir", opt.out_dir, "output directory");
  cmd->add_option("--mode", opt.mode, "cross-validation mode: cbcv|loco");
  cmd->add_option("--test-city", opt.test_city, "held-out city for loco");
  cmd->add_option("--seed", opt.seed, "seed for model and synthetic data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tile-level spectrum demand estimation"};
  app.require_subcommand(1);

  CliOptions opt;
  using Stage = std::function<void(const specgrid::RunConfig&)>;
  std::vector<std::pair<CLI::App*, Stage>> stages;

  const auto add_stage = [&](const char* name, const char* help, Stage fn) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, opt);
    stages.emplace_back(cmd, std::move(fn));
  };

  add_stage("synth", "generate a deterministic synthetic input set",
            specgrid::stage_synth);
  add_stage("proxy", "build the traffic target and deployed-bandwidth proxy, "
                     "then validate by OLS",
            specgrid::stage_proxy);
  add_stage("ingest", "harmonize raw datasets into multi-zoom features",
            specgrid::stage_ingest);
  add_stage("graph", "build the hierarchical graph and export its edges",
            specgrid::stage_graph);
  add_stage("train", "train HR-GAT on all reliable tiles",
            specgrid::stage_train);
  add_stage("eval", "cross-validated comparison of HR-GAT and baselines",
            specgrid::stage_eval);
  add_stage("explain", "sampled Shapley feature attribution",
            specgrid::stage_explain);
  add_stage("all", "run proxy, ingest, graph, train, eval and explain",
            specgrid::stage_all);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const specgrid::RunConfig config = resolve_config(opt);
    for (const auto& [cmd, fn] : stages)
      if (cmd->parsed()) fn(config);
    return 0;
  } catch (const specgrid::InvariantError& e) {
    std::fprintf(stderr, "invariant failure: %s\n", e.what());
    return 3;
  } catch (const specgrid::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

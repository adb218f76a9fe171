#include "specgrid/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"

using namespace specgrid;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_run(const std::string& tag) {
  RunConfig c;
  c.inputs_dir = "/tmp/specgrid_pipe_" + tag + "/in";
  c.out_dir = "/tmp/specgrid_pipe_" + tag + "/out";
  c.synth.n_cities = 2;
  c.synth.tiles_per_city = 64;
  c.synth.seed = 5;
  c.model.epochs = 40;
  c.model.hidden = 8;
  c.model.seed = 5;
  c.shap_samples = 4;
  c.shap_permutations = 2;
  std::filesystem::remove_all("/tmp/specgrid_pipe_" + tag);
  return c;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  SUBCASE("round trip through text") {
    RunConfig c;
    c.model.lambda = 0.25;
    c.synth.noise_sd = 3.5;
    const std::string path = "/tmp/specgrid_cfg.txt";
    {
      std::ofstream f(path);
      f << "# comment\n" << config_text(c);
    }
    const RunConfig d = load_config(path);
    CHECK(config_text(d) == config_text(c));
  }
  SUBCASE("unknown keys are rejected") {
    RunConfig c;
    CHECK_THROWS_AS(apply_config_entry(c, "nope", "1"), DataError);
  }
  SUBCASE("invalid values are rejected") {
    RunConfig c;
    c.model.lambda = -0.1;
    CHECK_THROWS_AS(validate_config(c), DataError);
    c = RunConfig{};
    c.sigma = -1.0;
    CHECK_THROWS_AS(validate_config(c), DataError);
    c = RunConfig{};
    c.zooms = {14, 15};
    CHECK_THROWS_AS(validate_config(c), DataError);
    c = RunConfig{};
    c.cv_mode = "random";
    CHECK_THROWS_AS(validate_config(c), DataError);
  }
  SUBCASE("cli-style overrides") {
    RunConfig c;
    apply_config_entry(c, "lambda", "0.4");
    apply_config_entry(c, "sigma", "auto");
    apply_config_entry(c, "synth.tiles_per_city", "500");
    CHECK(c.model.lambda == 0.4);
    CHECK(c.sigma == 0.0);
    CHECK(c.synth.tiles_per_city == 500);
  }
}

TEST_CASE("proxy and ingest recover the planted ground truth") {
  RunConfig c = small_run("truth");
  c.synth.noise_sd = 0.0;
  c.synth.cross_scale_strength = 0.0;
  stage_synth(c);
  stage_proxy(c);
  stage_ingest(c);

  // Proxy equals the planted truth tile by tile.
  const CsvTable truth = read_csv(c.inputs_dir + "/truth.csv");
  const CsvTable proxy = read_csv(c.out_dir + "/proxy.csv");
  REQUIRE(truth.rows.size() == proxy.rows.size());
  std::map<std::string, double> by_qk;
  const std::size_t tq = truth.col("quadkey"), ty = truth.col("y_true");
  for (const auto& row : truth.rows)
    by_qk[row[tq]] = parse_double(row[ty], "y");
  const std::size_t pq = proxy.col("quadkey"), pb = proxy.col("deployed_bw");
  for (const auto& row : proxy.rows) {
    const double want = by_qk.at(row[pq]);
    const double got = parse_double(row[pb], "bw");
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }

  // All tiles are covered well enough to be reliable.
  const CsvTable targets = read_csv(c.out_dir + "/targets.csv");
  const std::size_t rel = targets.col("reliable");
  for (const auto& row : targets.rows) CHECK(row[rel] == "1");

  // The OLS validation of traffic against the proxy is strong by design.
  const std::string ols = slurp(c.out_dir + "/ols.json");
  CHECK(ols.find("r_squared") != std::string::npos);

  // Features: fitting y on the planted columns alone is exact (zero noise,
  // zero cross-scale term).
  const FeatureTable table = load_feature_table(c);
  CHECK(table.features.size() == 30);
  std::vector<std::size_t> planted_cols;
  for (std::size_t j = 0; j < table.features.size(); ++j) {
    const std::string& n = table.features[j].name;
    if (n == "households" || n == "census_population" || n == "road_length_m")
      planted_cols.push_back(j);
  }
  REQUIRE(planted_cols.size() == 3);
  std::vector<std::vector<double>> xp(table.z15.grid.size());
  for (std::size_t i = 0; i < xp.size(); ++i)
    for (std::size_t j : planted_cols) xp[i].push_back(table.z15.x[i][j]);
  std::vector<std::size_t> rows(xp.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const LinearModel lm = fit_linear(xp, table.y, rows);
  const auto pred = lm.predict(xp);
  double sse = 0.0, sst = 0.0, mu = 0.0;
  for (double y : table.y) mu += y;
  mu /= static_cast<double>(table.y.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sse += (pred[i] - table.y[i]) * (pred[i] - table.y[i]);
    sst += (table.y[i] - mu) * (table.y[i] - mu);
  }
  CHECK(1.0 - sse / sst > 0.999999);
}

TEST_CASE("full pipeline runs and is deterministic") {
  RunConfig c = small_run("all");
  stage_synth(c);
  stage_all(c);

  const std::vector<std::string> outputs{
      "proxy.csv",        "targets.csv",       "ols.json",
      "features_z13.csv", "features_z14.csv",  "features_z15.csv",
      "features_meta.csv", "edges.csv",        "params.bin",
      "params_manifest.csv", "loss_trace.csv", "fusion_weights.csv",
      "report.json",      "fold_metrics.csv",  "residuals.csv",
      "ecdf.csv",         "predictions.geojson", "attribution.csv",
      "attribution_tiles.csv", "ingest_report.json"};
  for (const std::string& name : outputs)
    CHECK(std::filesystem::exists(c.out_dir + "/" + name));

  // Second run into a fresh directory: every declared output is identical.
  RunConfig c2 = c;
  c2.out_dir = c.out_dir + "2";
  stage_all(c2);
  for (const std::string& name : outputs)
    CHECK(slurp(c.out_dir + "/" + name) == slurp(c2.out_dir + "/" + name));

  // The report carries all four models, five folds each.
  const std::string report = slurp(c.out_dir + "/report.json");
  for (const char* m : {"hrgat", "plain_gat", "linear", "mlp"})
    CHECK(report.find(m) != std::string::npos);
}

TEST_CASE("loco mode holds out the named city") {
  RunConfig c = small_run("loco");
  c.cv_mode = "loco";
  c.test_city = "gta";
  c.model.epochs = 20;
  stage_synth(c);
  stage_proxy(c);
  stage_ingest(c);
  stage_graph(c);
  stage_eval(c);

  const CsvTable residuals = read_csv(c.out_dir + "/residuals.csv");
  const auto cities = load_label_csv(c.inputs_dir + "/cities.csv", "quadkey",
                                     "city");
  const std::size_t cq = residuals.col("quadkey");
  for (const auto& row : residuals.rows)
    CHECK(cities.at(row[cq]) == "gta");
}

TEST_CASE("explain stage without a checkpoint is a data error") {
  RunConfig c = small_run("nockpt");
  stage_synth(c);
  stage_proxy(c);
  stage_ingest(c);
  CHECK_THROWS_AS(stage_explain(c), DataError);
}

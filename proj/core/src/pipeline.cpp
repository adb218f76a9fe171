#include "specgrid/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"
#include "specgrid/explain.hpp"
#include "specgrid/stats.hpp"

namespace specgrid {

namespace {

constexpr const char* kVersion = "0.1.0";

using ordered_json = nlohmann::ordered_json;

std::string join_path(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  return f;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Per-stage run manifest. Diagnostics only: timings make it the one output
/// excluded from the byte-determinism guarantee.
class StageManifest {
 public:
  StageManifest(const RunConfig& config, std::string stage)
      : config_(config),
        stage_(std::move(stage)),
        start_(std::chrono::steady_clock::now()) {}

  void add_output(const std::string& path) { outputs_.push_back(path); }

  ~StageManifest() {
    try {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
      ordered_json j;
      j["stage"] = stage_;
      j["version"] = kVersion;
      j["seed"] = config_.model.seed;
      char hash[32];
      std::snprintf(hash, sizeof(hash), "%016llx",
                    static_cast<unsigned long long>(
                        fnv1a(config_text(config_))));
      j["config_hash"] = hash;
      j["duration_ms"] = ms;
      j["outputs"] = outputs_;
      std::filesystem::create_directories(config_.out_dir);
      auto f = open_out(join_path(config_.out_dir, "manifest_" + stage_ + ".json"));
      f << j.dump(2) << "\n";
    } catch (...) {
      // manifest failure must not mask the stage result
    }
  }

 private:
  const RunConfig& config_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
};

}  // namespace

// --- config -------------------------------------------------------------------

void apply_config_entry(RunConfig& c, const std::string& key,
                        const std::string& value) {
  const auto as_double = [&] { return parse_double(value, key); };
  const auto as_size = [&] {
    const long v = parse_long(value, key);
    if (v < 0) throw DataError("config: " + key + " must be nonnegative");
    return static_cast<std::size_t>(v);
  };

  if (key == "inputs_dir") c.inputs_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "sigma") c.sigma = value == "auto" ? 0.0 : as_double();
  else if (key == "zooms") {
    c.zooms.clear();
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ','))
      c.zooms.push_back(static_cast<int>(parse_long(part, "zooms")));
  } else if (key == "hidden") c.model.hidden = as_size();
  else if (key == "layers") c.model.layers = as_size();
  else if (key == "leaky_slope") c.model.leaky_slope = as_double();
  else if (key == "lambda") c.model.lambda = as_double();
  else if (key == "learning_rate") c.model.learning_rate = as_double();
  else if (key == "epochs") c.model.epochs = as_size();
  else if (key == "seed") c.model.seed = static_cast<std::uint64_t>(
                              parse_long(value, key));
  else if (key == "cv_mode") c.cv_mode = value;
  else if (key == "test_city") c.test_city = value;
  else if (key == "shap_samples") c.shap_samples = as_size();
  else if (key == "shap_permutations") c.shap_permutations = as_size();
  else if (key == "synth.cities") c.synth.n_cities = as_size();
  else if (key == "synth.tiles_per_city") c.synth.tiles_per_city = as_size();
  else if (key == "synth.coeff_households") c.synth.coeff_households = as_double();
  else if (key == "synth.coeff_population") c.synth.coeff_population = as_double();
  else if (key == "synth.coeff_road_m") c.synth.coeff_road_m = as_double();
  else if (key == "synth.base_demand") c.synth.base_demand = as_double();
  else if (key == "synth.cross_scale") c.synth.cross_scale_strength = as_double();
  else if (key == "synth.noise_sd") c.synth.noise_sd = as_double();
  else if (key == "synth.seed") c.synth.seed = static_cast<std::uint64_t>(
                                    parse_long(value, key));
  else throw DataError("config: unknown key '" + key + "'");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  RunConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config: line " + std::to_string(line_no) +
                      " is not key=value");
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void validate_config(const RunConfig& c) {
  if (c.zooms != std::vector<int>{13, 14, 15})
    throw DataError("config: zooms must be exactly 13,14,15");
  if (c.sigma < 0.0)
    throw DataError("config: sigma must be positive meters or auto");
  if (c.model.lambda < 0.0) throw DataError("config: lambda must be >= 0");
  if (c.model.hidden == 0 || c.model.layers == 0 || c.model.epochs == 0)
    throw DataError("config: hidden, layers and epochs must be positive");
  if (!(c.model.learning_rate > 0.0))
    throw DataError("config: learning_rate must be positive");
  if (c.cv_mode != "cbcv" && c.cv_mode != "loco")
    throw DataError("config: cv_mode must be cbcv or loco");
  if (c.shap_samples == 0 || c.shap_permutations == 0)
    throw DataError("config: shap_samples and shap_permutations must be >= 1");
}

std::string config_text(const RunConfig& c) {
  std::string zooms;
  for (std::size_t i = 0; i < c.zooms.size(); ++i)
    zooms += (i ? "," : "") + std::to_string(c.zooms[i]);
  std::string out;
  const auto kv = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  kv("inputs_dir", c.inputs_dir);
  kv("out_dir", c.out_dir);
  kv("sigma", c.sigma == 0.0 ? "auto" : fmt_double(c.sigma));
  kv("zooms", zooms);
  kv("hidden", std::to_string(c.model.hidden));
  kv("layers", std::to_string(c.model.layers));
  kv("leaky_slope", fmt_double(c.model.leaky_slope));
  kv("lambda", fmt_double(c.model.lambda));
  kv("learning_rate", fmt_double(c.model.learning_rate));
  kv("epochs", std::to_string(c.model.epochs));
  kv("seed", std::to_string(c.model.seed));
  kv("cv_mode", c.cv_mode);
  kv("test_city", c.test_city);
  kv("shap_samples", std::to_string(c.shap_samples));
  kv("shap_permutations", std::to_string(c.shap_permutations));
  kv("synth.cities", std::to_string(c.synth.n_cities));
  kv("synth.tiles_per_city", std::to_string(c.synth.tiles_per_city));
  kv("synth.coeff_households", fmt_double(c.synth.coeff_households));
  kv("synth.coeff_population", fmt_double(c.synth.coeff_population));
  kv("synth.coeff_road_m", fmt_double(c.synth.coeff_road_m));
  kv("synth.base_demand", fmt_double(c.synth.base_demand));
  kv("synth.cross_scale", fmt_double(c.synth.cross_scale_strength));
  kv("synth.noise_sd", fmt_double(c.synth.noise_sd));
  kv("synth.seed", std::to_string(c.synth.seed));
  return out;
}

// --- stage: synth ---------------------------------------------------------------

void stage_synth(const RunConfig& config) {
  StageManifest manifest(config, "synth");
  const SyntheticSummary s = generate_synthetic(config.synth, config.inputs_dir);
  for (const char* name :
       {"cells.csv", "sites.csv", "points.csv", "zones.csv", "shapes.csv",
        "landcover.csv", "cities.csv", "truth.csv"})
    manifest.add_output(join_path(config.inputs_dir, name));
  (void)s;
}

// --- stage: proxy ---------------------------------------------------------------

namespace {

std::vector<TileId> universe_from_landcover(const RunConfig& config) {
  const auto lc = load_label_csv(join_path(config.inputs_dir, "landcover.csv"),
                                 "quadkey", "class");
  std::vector<TileId> tiles;
  for (const auto& [qk, cls] : lc) {
    const TileId t = parse_quadkey(qk);
    if (t.zoom() == kZoomMax) tiles.push_back(t);
  }
  if (tiles.empty())
    throw DataError("proxy: landcover.csv has no zoom-15 quadkeys");
  return tiles;
}

std::vector<CellTrafficRecord> load_cells(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_id = csv.col("cell_id"), c_lat = csv.col("lat"),
                    c_lon = csv.col("lon"), c_r = csv.col("radius_m"),
                    c_day = csv.col("day"), c_hour = csv.col("hour"),
                    c_mbps = csv.col("mbps");
  std::map<std::string, CellTrafficRecord> by_id;
  std::vector<std::string> order;
  for (const auto& row : csv.rows) {
    auto [it, inserted] = by_id.try_emplace(row[c_id]);
    if (inserted) {
      it->second.cell_id = row[c_id];
      it->second.coverage.center = {parse_double(row[c_lat], "cells.lat"),
                                    parse_double(row[c_lon], "cells.lon")};
      it->second.coverage.radius_m = parse_double(row[c_r], "cells.radius_m");
      order.push_back(row[c_id]);
    }
    it->second.throughput[{static_cast<int>(parse_long(row[c_day], "day")),
                           static_cast<int>(parse_long(row[c_hour], "hour"))}] =
        parse_double(row[c_mbps], "cells.mbps");
  }
  std::vector<CellTrafficRecord> out;
  for (const auto& id : order) out.push_back(std::move(by_id[id]));
  return out;
}

std::vector<SiteRecord> load_sites(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_id = csv.col("site_id"), c_lat = csv.col("lat"),
                    c_lon = csv.col("lon"), c_r = csv.col("radius_m"),
                    c_bw = csv.col("bw_mhz"), c_p = csv.col("eirp_opt");
  std::vector<SiteRecord> out;
  for (const auto& row : csv.rows) {
    SiteRecord s;
    s.site_id = row[c_id];
    s.coverage.center = {parse_double(row[c_lat], "sites.lat"),
                         parse_double(row[c_lon], "sites.lon")};
    s.coverage.radius_m = parse_double(row[c_r], "sites.radius_m");
    s.bandwidth_mhz = parse_double(row[c_bw], "sites.bw_mhz");
    if (!row[c_p].empty()) s.eirp = parse_double(row[c_p], "sites.eirp_opt");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void stage_proxy(const RunConfig& config) {
  StageManifest manifest(config, "proxy");
  std::filesystem::create_directories(config.out_dir);

  const std::vector<TileId> tiles = universe_from_landcover(config);
  const auto cells = load_cells(join_path(config.inputs_dir, "cells.csv"));
  const auto sites = load_sites(join_path(config.inputs_dir, "sites.csv"));

  const std::vector<TileTarget> targets = allocate_traffic(cells, tiles);
  const std::vector<TileProxy> proxy = build_proxy(sites, tiles);

  {
    auto f = open_out(join_path(config.out_dir, "targets.csv"));
    f << "quadkey,traffic_mbps,coverage_sum,reliable\n";
    for (const TileTarget& t : targets)
      f << csv_line({quadkey(t.tile), fmt_double(t.traffic_mbps),
                     fmt_double(t.coverage_sum), t.reliable ? "1" : "0"});
    manifest.add_output(join_path(config.out_dir, "targets.csv"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "proxy.csv"));
    f << "quadkey,deployed_bw\n";
    for (const TileProxy& p : proxy)
      f << csv_line({quadkey(p.tile), fmt_double(p.deployed_bw)});
    manifest.add_output(join_path(config.out_dir, "proxy.csv"));
  }

  // OLS validation of the proxy on reliable tiles.
  std::vector<std::pair<double, double>> xy;
  for (std::size_t i = 0; i < tiles.size(); ++i)
    if (targets[i].reliable)
      xy.emplace_back(proxy[i].deployed_bw, targets[i].traffic_mbps);
  ordered_json j;
  j["n_reliable"] = xy.size();
  j["n_excluded"] = tiles.size() - xy.size();
  if (xy.size() >= 3) {
    const OlsResult ols = ols_validate(xy);
    j["beta0"] = ols.beta0;
    j["beta1"] = ols.beta1;
    j["r_squared"] = ols.r_squared;
    j["f_statistic"] = ols.f_statistic;
    j["p_value"] = ols.p_value;
  } else {
    j["error"] = "fewer than 3 reliable tiles; OLS skipped";
  }
  auto f = open_out(join_path(config.out_dir, "ols.json"));
  f << j.dump(2) << "\n";
  manifest.add_output(join_path(config.out_dir, "ols.json"));
}

// --- stage: ingest ---------------------------------------------------------------

namespace {

const char* agg_name(AggKind k) { return k == AggKind::sum ? "sum" : "mean"; }

std::map<std::string, bool> load_reliable(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_qk = csv.col("quadkey"), c_rel = csv.col("reliable");
  std::map<std::string, bool> out;
  for (const auto& row : csv.rows) out[row[c_qk]] = row[c_rel] == "1";
  return out;
}

std::vector<TileProxy> load_proxy(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_qk = csv.col("quadkey"), c_bw = csv.col("deployed_bw");
  std::vector<TileProxy> out;
  for (const auto& row : csv.rows)
    out.push_back({parse_quadkey(row[c_qk]),
                   parse_double(row[c_bw], "proxy.deployed_bw")});
  return out;
}

FeatureTable assemble_from_inputs(const RunConfig& config,
                                  const TileGrid& grid,
                                  std::vector<AssembleInput> features) {
  const auto landcover =
      load_label_csv(join_path(config.inputs_dir, "landcover.csv"), "quadkey",
                     "class");
  std::map<std::string, std::string> cities;
  const std::string cities_path = join_path(config.inputs_dir, "cities.csv");
  if (std::filesystem::exists(cities_path))
    cities = load_label_csv(cities_path, "quadkey", "city");
  const auto proxy = load_proxy(join_path(config.out_dir, "proxy.csv"));
  const auto reliable =
      load_reliable(join_path(config.out_dir, "targets.csv"));
  return assemble(grid, std::move(features), proxy, landcover, cities,
                  reliable);
}

}  // namespace

void stage_ingest(const RunConfig& config) {
  StageManifest manifest(config, "ingest");
  std::filesystem::create_directories(config.out_dir);
  const TileGrid grid(universe_from_landcover(config));

  std::vector<AssembleInput> features;
  IngestReport report;

  for (const PointDataset& ds :
       load_points_csv(join_path(config.inputs_dir, "points.csv"))) {
    AssembleInput in;
    in.name = ds.name;
    in.agg = AggKind::sum;
    in.z15_values =
        qa_pipeline(aggregate_points(ds, grid, &report), QaKind::point, grid);
    features.push_back(std::move(in));
  }
  for (const PolygonMetricDataset& ds :
       load_zones_csv(join_path(config.inputs_dir, "zones.csv"))) {
    AssembleInput in;
    in.name = ds.name;
    in.agg = AggKind::sum;
    in.z15_values = qa_pipeline(interpolate_polygon_metric(ds, grid, &report),
                                QaKind::polygon_metric, grid);
    features.push_back(std::move(in));
  }
  for (const PolygonShapeDataset& ds :
       load_shapes_csv(join_path(config.inputs_dir, "shapes.csv"))) {
    AssembleInput in;
    in.name = ds.name;
    in.agg = ds.derived_metric == ShapeMetric::density ? AggKind::mean
                                                       : AggKind::sum;
    in.z15_values = qa_pipeline(derive_shape_metrics(ds, grid, &report),
                                QaKind::polygon_shape, grid);
    features.push_back(std::move(in));
  }

  const FeatureTable table =
      assemble_from_inputs(config, grid, std::move(features));

  for (int z : {13, 14, 15}) {
    const std::string path =
        join_path(config.out_dir, "features_z" + std::to_string(z) + ".csv");
    write_features_csv(path, table, z);
    manifest.add_output(path);
  }
  {
    auto f = open_out(join_path(config.out_dir, "features_meta.csv"));
    f << "name,agg\n";
    for (const FeatureColumn& c : table.features)
      f << csv_line({c.name, agg_name(c.agg)});
    manifest.add_output(join_path(config.out_dir, "features_meta.csv"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "ingest_report.json"));
    ordered_json j;
    j["n_features"] = table.features.size();
    j["n_tiles_z15"] = table.z15.grid.size();
    j["dropped_points"] = report.dropped_points;
    j["dropped_zones"] = report.dropped_zones;
    j["dropped_shapes"] = report.dropped_shapes;
    j["warnings"] = report.warnings;
    f << j.dump(2) << "\n";
    manifest.add_output(join_path(config.out_dir, "ingest_report.json"));
  }
}

FeatureTable load_feature_table(const RunConfig& config) {
  const CsvTable meta =
      read_csv(join_path(config.out_dir, "features_meta.csv"));
  const std::size_t c_name = meta.col("name"), c_agg = meta.col("agg");

  const CsvTable z15 =
      read_csv(join_path(config.out_dir, "features_z15.csv"));
  const std::size_t c_qk = z15.col("quadkey");
  std::vector<TileId> tiles;
  for (const auto& row : z15.rows) tiles.push_back(parse_quadkey(row[c_qk]));
  const TileGrid grid(std::move(tiles));

  std::vector<AssembleInput> features;
  for (const auto& row : meta.rows) {
    AssembleInput in;
    in.name = row[c_name];
    in.agg = row[c_agg] == "mean" ? AggKind::mean : AggKind::sum;
    const std::size_t col = z15.col(in.name);
    in.z15_values.assign(grid.size(), 0.0);
    for (const auto& frow : z15.rows) {
      const auto idx = grid.index_of(parse_quadkey(frow[c_qk]));
      in.z15_values[*idx] = parse_double(frow[col], in.name);
    }
    features.push_back(std::move(in));
  }
  return assemble_from_inputs(config, grid, std::move(features));
}

// --- stage: graph ---------------------------------------------------------------

namespace {

HierGraph build_graph_for(const RunConfig& config, const FeatureTable& table) {
  return config.sigma > 0.0 ? HierGraph::build(table, config.sigma)
                            : HierGraph::build_auto(table);
}

}  // namespace

void stage_graph(const RunConfig& config) {
  StageManifest manifest(config, "graph");
  const FeatureTable table = load_feature_table(config);
  const HierGraph graph = build_graph_for(config, table);
  const std::string path = join_path(config.out_dir, "edges.csv");
  graph.write_edges_csv(path);
  manifest.add_output(path);
}

// --- fitters ---------------------------------------------------------------------

std::vector<std::size_t> ancestor_rows(const FeatureTable& table,
                                       const std::vector<std::size_t>& z15_rows,
                                       int zoom) {
  std::vector<char> mark(table.layer(zoom).grid.size(), 0);
  for (std::size_t r : z15_rows) {
    TileId t = table.z15.grid.tiles()[r];
    for (int z = 14; z >= zoom; --z) t = parent(t);
    if (const auto idx = table.layer(zoom).grid.index_of(t)) mark[*idx] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mark.size(); ++i)
    if (mark[i]) out.push_back(i);
  return out;
}

std::map<int, DenseMatrix> standardized_inputs(
    const FeatureTable& table, const std::vector<std::size_t>& train_rows,
    const std::vector<int>& zooms) {
  std::map<int, DenseMatrix> out;
  for (int z : zooms) {
    const ZoomLayer& layer = table.layer(z);
    const std::vector<std::size_t> fit_rows =
        z == 15 ? train_rows : ancestor_rows(table, train_rows, z);
    const Standardizer st = Standardizer::fit(layer.x, fit_rows);
    const auto x = st.apply(layer.x);
    DenseMatrix m(x.size(), table.features.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x[i].size(); ++j) m.at(i, j) = x[i][j];
    out[z] = std::move(m);
  }
  return out;
}

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::hrgat: return "hrgat";
    case ModelKind::plain_gat: return "plain_gat";
    case ModelKind::linear: return "linear";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

FitPredictFn make_fitter(ModelKind kind, const FeatureTable& table,
                         const HierGraph& graph, const HrGatConfig& config) {
  switch (kind) {
    case ModelKind::hrgat:
    case ModelKind::plain_gat: {
      const bool hierarchical = kind == ModelKind::hrgat;
      const auto mg = std::make_shared<ModelGraph>(
          ModelGraph::from(graph, hierarchical));
      return [&table, mg, config,
              hierarchical](const std::vector<std::size_t>& train_rows) {
        const auto x = standardized_inputs(table, train_rows, mg->zooms);
        HrGatParams params = HrGatParams::init(
            table.features.size(), config,
            hierarchical ? std::vector<int>{13, 14, 15}
                         : std::vector<int>{15});
        const TrainResult result =
            train(std::move(params), *mg, x, table.y, train_rows);
        return forward(result.params, *mg, x).y_hat;
      };
    }
    case ModelKind::linear:
      return [&table](const std::vector<std::size_t>& train_rows) {
        const LinearModel m = fit_linear(table.z15.x, table.y, train_rows);
        return m.predict(table.z15.x);
      };
    case ModelKind::mlp:
      return [&table, config](const std::vector<std::size_t>& train_rows) {
        const Standardizer st = Standardizer::fit(table.z15.x, train_rows);
        const auto xs = st.apply(table.z15.x);
        DenseMatrix m(xs.size(), table.features.size());
        for (std::size_t i = 0; i < xs.size(); ++i)
          for (std::size_t j = 0; j < xs[i].size(); ++j)
            m.at(i, j) = xs[i][j];
        const MlpModel mlp = fit_mlp(m, table.y, train_rows, config);
        return mlp.predict(m);
      };
  }
  throw DataError("make_fitter: unknown model kind");
}

// --- stage: train ---------------------------------------------------------------

void stage_train(const RunConfig& config) {
  StageManifest manifest(config, "train");
  const FeatureTable table = load_feature_table(config);
  const HierGraph graph = build_graph_for(config, table);
  const ModelGraph mg = ModelGraph::from(graph, true);

  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < table.z15.grid.size(); ++i)
    if (table.reliable[i]) train_rows.push_back(i);
  if (train_rows.empty()) throw DataError("train: no reliable tiles");

  const auto x = standardized_inputs(table, train_rows, mg.zooms);
  HrGatParams params =
      HrGatParams::init(table.features.size(), config.model, {13, 14, 15});
  const TrainResult result =
      train(std::move(params), mg, x, table.y, train_rows);

  const std::string bin = join_path(config.out_dir, "params.bin");
  const std::string man = join_path(config.out_dir, "params_manifest.csv");
  save_checkpoint(result.params, bin, man);
  manifest.add_output(bin);
  manifest.add_output(man);

  {
    auto f = open_out(join_path(config.out_dir, "loss_trace.csv"));
    f << "epoch,total,mse,spatial\n";
    for (const TraceEntry& e : result.trace)
      f << csv_line({std::to_string(e.epoch), fmt_double(e.total),
                     fmt_double(e.mse), fmt_double(e.spatial)});
    manifest.add_output(join_path(config.out_dir, "loss_trace.csv"));
  }
  {
    const Prediction pred = forward(result.params, mg, x);
    auto f = open_out(join_path(config.out_dir, "fusion_weights.csv"));
    f << "quadkey,alpha_z13,alpha_z14,alpha_z15\n";
    for (std::size_t i = 0; i < table.z15.grid.size(); ++i)
      f << csv_line({quadkey(table.z15.grid.tiles()[i]),
                     fmt_double(pred.fusion[i][0]),
                     fmt_double(pred.fusion[i][1]),
                     fmt_double(pred.fusion[i][2])});
    manifest.add_output(join_path(config.out_dir, "fusion_weights.csv"));
  }
}

// --- stage: eval -----------------------------------------------------------------

namespace {

ordered_json eval_to_json(const ModelEval& ev) {
  ordered_json j;
  j["model"] = ev.model;
  j["median_mae"] = ev.median_mae;
  j["median_rmse"] = ev.median_rmse;
  j["median_morans_i"] = ev.median_morans;
  j["r2_pooled"] = ev.r2;
  ordered_json folds = ordered_json::array();
  for (const FoldResult& f : ev.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["n_tiles"] = f.n_tiles;
    fj["mae"] = f.metrics.mae;
    fj["rmse"] = f.metrics.rmse;
    fj["r2"] = f.metrics.r2;
    fj["morans_i"] = f.morans;
    folds.push_back(fj);
  }
  j["folds"] = folds;
  return j;
}

void write_geojson(const std::string& path, const FeatureTable& table,
                   const ModelEval& ev) {
  ordered_json features = ordered_json::array();
  for (std::size_t k = 0; k < ev.eval_rows.size(); ++k) {
    const std::size_t row = ev.eval_rows[k];
    const TileId t = table.z15.grid.tiles()[row];
    const TileBounds b = tile_bounds(t);
    ordered_json f;
    f["type"] = "Feature";
    f["properties"] = {{"quadkey", quadkey(t)},
                       {"y", table.y[row]},
                       {"y_hat", ev.predictions[k]},
                       {"residual", ev.residuals[k]}};
    f["geometry"] = {
        {"type", "Polygon"},
        {"coordinates",
         {{{b.lon_min, b.lat_min},
           {b.lon_max, b.lat_min},
           {b.lon_max, b.lat_max},
           {b.lon_min, b.lat_max},
           {b.lon_min, b.lat_min}}}}};
    features.push_back(std::move(f));
  }
  ordered_json j;
  j["type"] = "FeatureCollection";
  j["features"] = std::move(features);
  auto f = open_out(path);
  f << j.dump() << "\n";
}

}  // namespace

void stage_eval(const RunConfig& config) {
  StageManifest manifest(config, "eval");
  const FeatureTable table = load_feature_table(config);
  const HierGraph graph = build_graph_for(config, table);

  const std::vector<ModelKind> kinds{ModelKind::hrgat, ModelKind::plain_gat,
                                     ModelKind::linear, ModelKind::mlp};
  std::vector<ModelEval> evals;

  if (config.cv_mode == "cbcv") {
    const auto clusters = stage1_clusters(table.z14);
    FoldAssignment folds = stage2_folds(clusters);
    derive_z15_folds(table, clusters, folds);
    verify_folds(clusters, folds);
    for (ModelKind kind : kinds)
      evals.push_back(run_cbcv(model_name(kind),
                               make_fitter(kind, table, graph, config.model),
                               table, folds));
  } else {
    for (ModelKind kind : kinds)
      evals.push_back(run_loco(model_name(kind),
                               make_fitter(kind, table, graph, config.model),
                               table, config.test_city));
  }

  ordered_json report;
  report["cv_mode"] = config.cv_mode;
  if (config.cv_mode == "loco") report["test_city"] = config.test_city;
  ordered_json models = ordered_json::array();
  for (const ModelEval& ev : evals) models.push_back(eval_to_json(ev));
  report["models"] = std::move(models);

  // Paired t-tests of HR-GAT against each baseline across folds.
  if (evals.front().folds.size() >= 2) {
    ordered_json tests = ordered_json::array();
    const auto series = [](const ModelEval& ev, bool morans) {
      std::vector<double> out;
      for (const FoldResult& f : ev.folds)
        out.push_back(morans ? f.morans : f.metrics.rmse);
      return out;
    };
    for (std::size_t m = 1; m < evals.size(); ++m) {
      for (const bool morans : {false, true}) {
        ordered_json t;
        t["metric"] = morans ? "morans_i" : "rmse";
        t["a"] = evals.front().model;
        t["b"] = evals[m].model;
        try {
          const TTestResult r = paired_t_test(series(evals.front(), morans),
                                              series(evals[m], morans));
          t["t"] = r.t;
          t["p"] = r.p;
        } catch (const DataError& e) {
          t["error"] = e.what();
        }
        tests.push_back(std::move(t));
      }
    }
    report["paired_t_tests"] = std::move(tests);
  }

  {
    auto f = open_out(join_path(config.out_dir, "report.json"));
    f << report.dump(2) << "\n";
    manifest.add_output(join_path(config.out_dir, "report.json"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "fold_metrics.csv"));
    f << "model,fold,n_tiles,mae,rmse,r2,morans_i\n";
    for (const ModelEval& ev : evals)
      for (const FoldResult& fr : ev.folds)
        f << csv_line({ev.model, std::to_string(fr.fold),
                       std::to_string(fr.n_tiles), fmt_double(fr.metrics.mae),
                       fmt_double(fr.metrics.rmse), fmt_double(fr.metrics.r2),
                       fmt_double(fr.morans)});
    manifest.add_output(join_path(config.out_dir, "fold_metrics.csv"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "residuals.csv"));
    f << "model,quadkey,y,y_hat,residual\n";
    for (const ModelEval& ev : evals)
      for (std::size_t k = 0; k < ev.eval_rows.size(); ++k)
        f << csv_line({ev.model,
                       quadkey(table.z15.grid.tiles()[ev.eval_rows[k]]),
                       fmt_double(table.y[ev.eval_rows[k]]),
                       fmt_double(ev.predictions[k]),
                       fmt_double(ev.residuals[k])});
    manifest.add_output(join_path(config.out_dir, "residuals.csv"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "ecdf.csv"));
    f << "model,abs_residual,fraction\n";
    for (const ModelEval& ev : evals) {
      std::vector<double> abs_res;
      for (double r : ev.residuals) abs_res.push_back(std::fabs(r));
      for (const auto& [v, frac] : ecdf(std::move(abs_res)))
        f << csv_line({ev.model, fmt_double(v), fmt_double(frac)});
    }
    manifest.add_output(join_path(config.out_dir, "ecdf.csv"));
  }
  write_geojson(join_path(config.out_dir, "predictions.geojson"), table,
                evals.front());
  manifest.add_output(join_path(config.out_dir, "predictions.geojson"));
}

// --- stage: explain ---------------------------------------------------------------

void stage_explain(const RunConfig& config) {
  StageManifest manifest(config, "explain");
  const FeatureTable table = load_feature_table(config);
  const HierGraph graph = build_graph_for(config, table);
  const ModelGraph mg = ModelGraph::from(graph, true);

  const HrGatParams params =
      load_checkpoint(join_path(config.out_dir, "params.bin"),
                      join_path(config.out_dir, "params_manifest.csv"),
                      config.model);

  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < table.z15.grid.size(); ++i)
    if (table.reliable[i]) train_rows.push_back(i);
  const Standardizer st = Standardizer::fit(table.z15.x, train_rows);
  const auto x = standardized_inputs(table, train_rows, mg.zooms);

  // Model output at one tile as a function of that tile's raw features.
  const TileEvalFn eval_tile = [&](std::size_t row,
                                   const std::vector<double>& feats) {
    std::map<int, DenseMatrix> xi = x;
    const auto fs = st.apply({feats});
    for (std::size_t j = 0; j < fs[0].size(); ++j)
      xi.at(15).at(row, j) = fs[0][j];
    return forward(params, mg, xi).y_hat[row];
  };

  // Baseline: feature-wise mean of the training tiles.
  std::vector<double> baseline(table.features.size(), 0.0);
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < baseline.size(); ++j)
      baseline[j] += table.z15.x[r][j];
  for (double& v : baseline) v /= static_cast<double>(train_rows.size());

  // Deterministic evenly spaced tile sample over the reliable rows.
  std::vector<std::size_t> sample;
  const std::size_t want = std::min(config.shap_samples, train_rows.size());
  for (std::size_t k = 0; k < want; ++k)
    sample.push_back(train_rows[k * train_rows.size() / want]);

  std::vector<std::string> names;
  for (const FeatureColumn& c : table.features) names.push_back(c.name);

  const Attribution attr =
      shapley_sampled(eval_tile, table.z15.x, sample, baseline, names,
                      config.shap_permutations, config.model.seed);
  const auto order = rank_features(attr, names.size());

  {
    auto f = open_out(join_path(config.out_dir, "attribution.csv"));
    f << "feature,mean_abs_shap,rank\n";
    for (std::size_t r = 0; r < order.size(); ++r)
      f << csv_line({names[order[r]], fmt_double(attr.mean_abs_shap[order[r]]),
                     std::to_string(r + 1)});
    manifest.add_output(join_path(config.out_dir, "attribution.csv"));
  }
  {
    auto f = open_out(join_path(config.out_dir, "attribution_tiles.csv"));
    std::vector<std::string> header{"quadkey"};
    for (const auto& n : names) header.push_back(n);
    f << csv_line(header);
    for (std::size_t s = 0; s < attr.sample_rows.size(); ++s) {
      std::vector<std::string> row{
          quadkey(table.z15.grid.tiles()[attr.sample_rows[s]])};
      for (double v : attr.per_tile[s]) row.push_back(fmt_double(v));
      f << csv_line(row);
    }
    manifest.add_output(join_path(config.out_dir, "attribution_tiles.csv"));
  }
}

void stage_all(const RunConfig& config) {
  stage_proxy(config);
  stage_ingest(config);
  stage_graph(config);
  stage_train(config);
  stage_eval(config);
  stage_explain(config);
}

}  // namespace specgrid

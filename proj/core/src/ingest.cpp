#include "specgrid/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"

namespace specgrid {

TileGrid::TileGrid(std::vector<TileId> tiles) : tiles_(std::move(tiles)) {
  if (tiles_.empty()) throw DataError("TileGrid: empty tile universe");
  std::sort(tiles_.begin(), tiles_.end());
  tiles_.erase(std::unique(tiles_.begin(), tiles_.end()), tiles_.end());
  zoom_ = tiles_.front().zoom();
  for (const TileId& t : tiles_)
    if (t.zoom() != zoom_)
      throw DataError("TileGrid: mixed zooms in tile universe");
}

std::optional<std::size_t> TileGrid::index_of(const TileId& t) const {
  const auto it = std::lower_bound(tiles_.begin(), tiles_.end(), t);
  if (it == tiles_.end() || !(*it == t)) return std::nullopt;
  return static_cast<std::size_t>(it - tiles_.begin());
}

std::vector<std::size_t> TileGrid::neighbor_indices(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const TileId& nb : neighbors8(tiles_[i]))
    if (const auto idx = index_of(nb)) out.push_back(*idx);
  return out;
}

namespace {

void warn(IngestReport* report, const std::string& msg) {
  if (report) report->warnings.push_back(msg);
}

}  // namespace

std::vector<double> aggregate_points(const PointDataset& ds,
                                     const TileGrid& grid,
                                     IngestReport* report) {
  std::vector<double> values(grid.size(), 0.0);
  // Duplicate = exact coordinate repeat within one tile.
  std::set<std::tuple<std::size_t, double, double>> seen;
  for (const WeightedPoint& wp : ds.points) {
    const bool bad = !std::isfinite(wp.point.lat) ||
                     !std::isfinite(wp.point.lon) ||
                     std::fabs(wp.point.lat) > kMercatorMaxLat ||
                     wp.point.lon < -180.0 || wp.point.lon >= 180.0 ||
                     !(wp.weight >= 0.0) || !std::isfinite(wp.weight);
    if (bad) {
      if (report) ++report->dropped_points;
      continue;
    }
    const auto idx = grid.index_of(tile_at(wp.point, grid.zoom()));
    if (!idx) continue;
    if (!seen.emplace(*idx, wp.point.lat, wp.point.lon).second) continue;
    values[*idx] += wp.weight;
  }
  return values;
}

namespace {

// Intersection areas of a geometry's polygons with every universe tile it
// can touch. One shared reference latitude keeps the ratios consistent.
std::vector<std::pair<std::size_t, double>> polygon_tile_areas(
    const Geometry& g, const TileGrid& grid) {
  const BBox bb = geometry_bbox(g);
  const double ref_lat = 0.5 * (bb.lat_min + bb.lat_max);
  const TileId tl = tile_at({bb.lat_max, bb.lon_min}, grid.zoom());
  const TileId br = tile_at({bb.lat_min, bb.lon_max}, grid.zoom());
  std::vector<std::pair<std::size_t, double>> out;
  for (std::uint32_t y = tl.y(); y <= br.y(); ++y) {
    for (std::uint32_t x = tl.x(); x <= br.x(); ++x) {
      const TileId t(grid.zoom(), x, y);
      const auto idx = grid.index_of(t);
      if (!idx) continue;
      const TileBounds tb = tile_bounds(t);
      double a = 0.0;
      for (const Polygon& p : g.polygons)
        a += polygon_tile_area_m2(p, tb, ref_lat);
      if (a > 0.0) out.emplace_back(*idx, a);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double geometry_area_m2(const Geometry& g) {
  const BBox bb = geometry_bbox(g);
  const double ref_lat = 0.5 * (bb.lat_min + bb.lat_max);
  double a = 0.0;
  for (const Polygon& p : g.polygons) a += polygon_area_m2(p, ref_lat);
  return a;
}

bool repair_geometry(Geometry& g) {
  std::vector<Polygon> kept;
  for (Polygon& p : g.polygons)
    if (validate_and_repair(p)) kept.push_back(std::move(p));
  const bool had_polygons = !g.polygons.empty();
  g.polygons = std::move(kept);
  if (had_polygons && g.polygons.empty() && g.lines.empty()) return false;
  return !g.empty();
}

}  // namespace

std::vector<double> interpolate_polygon_metric(const PolygonMetricDataset& ds,
                                               const TileGrid& grid,
                                               IngestReport* report) {
  std::vector<double> values(grid.size(), 0.0);

  // Parent densities for imputing missing lower-level metrics.
  std::map<std::string, double> parent_density;
  std::vector<Zone> zones = ds.zones;
  for (Zone& z : zones) {
    if (!repair_geometry(z.geometry)) {
      if (report) ++report->dropped_zones;
      warn(report, ds.name + ": unrepairable zone '" + z.zone_id + "' skipped");
      z.metric.reset();
      z.geometry = Geometry{};
      continue;
    }
    if (z.level == AdminLevel::upper && z.metric) {
      const double area = geometry_area_m2(z.geometry);
      if (area > 0.0) parent_density[z.zone_id] = *z.metric / area;
    }
  }

  for (const Zone& z : zones) {
    if (z.geometry.empty()) continue;
    // Upper-level zones act as imputation context only when a lower level
    // exists for them; standalone zones interpolate directly.
    if (z.level == AdminLevel::upper) {
      bool has_children = false;
      for (const Zone& other : zones)
        if (other.parent_zone_id == z.zone_id) {
          has_children = true;
          break;
        }
      if (has_children) continue;
    }
    double metric;
    if (z.metric) {
      metric = *z.metric;
    } else {
      const auto it = parent_density.find(z.parent_zone_id);
      if (it == parent_density.end()) {
        if (report) ++report->dropped_zones;
        warn(report, ds.name + ": zone '" + z.zone_id +
                         "' has no metric and no parent density");
        continue;
      }
      metric = it->second * geometry_area_m2(z.geometry);
    }
    const auto areas = polygon_tile_areas(z.geometry, grid);
    double total = 0.0;
    for (const auto& [idx, a] : areas) total += a;
    if (total <= 0.0) {
      if (report) ++report->dropped_zones;
      warn(report, ds.name + ": zone '" + z.zone_id +
                       "' has zero area on the tile universe, metric dropped");
      continue;
    }
    for (const auto& [idx, a] : areas) values[idx] += metric * a / total;
  }
  return values;
}

std::vector<double> derive_shape_metrics(const PolygonShapeDataset& ds,
                                         const TileGrid& grid,
                                         IngestReport* report) {
  std::vector<double> values(grid.size(), 0.0);
  for (const Geometry& shape : ds.shapes) {
    Geometry g = shape;
    if (!repair_geometry(g)) {
      if (report) ++report->dropped_shapes;
      warn(report, ds.name + ": unrepairable shape skipped");
      continue;
    }
    const auto areas = polygon_tile_areas(g, grid);

    std::vector<std::pair<std::size_t, double>> lengths;
    if (!g.lines.empty()) {
      const BBox bb = geometry_bbox(g);
      const TileId tl = tile_at({bb.lat_max, bb.lon_min}, grid.zoom());
      const TileId br = tile_at({bb.lat_min, bb.lon_max}, grid.zoom());
      for (std::uint32_t y = tl.y(); y <= br.y(); ++y) {
        for (std::uint32_t x = tl.x(); x <= br.x(); ++x) {
          const auto idx = grid.index_of(TileId(grid.zoom(), x, y));
          if (!idx) continue;
          const TileBounds tb = tile_bounds(TileId(grid.zoom(), x, y));
          double len = 0.0;
          for (const Polyline& l : g.lines)
            len += polyline_tile_length_m(l, tb);
          if (len > 0.0) lengths.emplace_back(*idx, len);
        }
      }
    }

    switch (ds.derived_metric) {
      case ShapeMetric::count: {
        std::set<std::size_t> touched;
        for (const auto& [idx, a] : areas) touched.insert(idx);
        for (const auto& [idx, l] : lengths) touched.insert(idx);
        for (std::size_t idx : touched) values[idx] += 1.0;
        break;
      }
      case ShapeMetric::total_length_m:
        for (const auto& [idx, l] : lengths) values[idx] += l;
        break;
      case ShapeMetric::total_area_m2:
        for (const auto& [idx, a] : areas) values[idx] += a;
        break;
      case ShapeMetric::density:
        for (const auto& [idx, a] : areas)
          values[idx] += a / tile_area_m2(grid.tiles()[idx]);
        break;
    }
  }
  return values;
}

std::vector<double> qa_pipeline(const std::vector<double>& values, QaKind kind,
                                const TileGrid& grid) {
  if (values.size() != grid.size())
    throw DataError("qa_pipeline: values not aligned to tile grid");
  for (double v : values)
    if (!std::isfinite(v))
      throw DataError("qa_pipeline: non-finite input value");

  std::vector<double> out = values;
  switch (kind) {
    case QaKind::point:
    case QaKind::polygon_metric: {
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != 0.0) continue;
        const auto nbs = grid.neighbor_indices(i);
        std::size_t nonzero = 0;
        double sum_all = 0.0, sum_nonzero = 0.0;
        for (std::size_t j : nbs) {
          sum_all += values[j];
          if (values[j] != 0.0) {
            ++nonzero;
            sum_nonzero += values[j];
          }
        }
        if (nonzero < 6) continue;
        out[i] = kind == QaKind::point
                     ? sum_all / static_cast<double>(nbs.size())
                     : sum_nonzero / static_cast<double>(nonzero);
      }
      break;
    }
    case QaKind::polygon_shape: {
      // Lower order statistic at the 99.9th percentile rank; interpolating
      // toward the maximum would let a single extreme value set its own cap.
      std::vector<double> sorted = values;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t idx = static_cast<std::size_t>(
          std::floor(0.999 * static_cast<double>(sorted.size() - 1)));
      const double cap = sorted[idx];
      for (double& v : out) v = std::min(v, cap);
      break;
    }
  }
  return out;
}

// --- assemble ---------------------------------------------------------------

const ZoomLayer& FeatureTable::layer(int zoom) const {
  switch (zoom) {
    case 13: return z13;
    case 14: return z14;
    case 15: return z15;
    default: throw DataError("FeatureTable: zoom must be 13, 14 or 15");
  }
}

ZoomLayer& FeatureTable::layer(int zoom) {
  return const_cast<ZoomLayer&>(
      static_cast<const FeatureTable&>(*this).layer(zoom));
}

namespace {

std::string modal_label(std::vector<std::string> labels) {
  labels.erase(std::remove(labels.begin(), labels.end(), std::string{}),
               labels.end());
  if (labels.empty()) return {};
  std::sort(labels.begin(), labels.end());
  std::string best;
  std::size_t best_count = 0, i = 0;
  while (i < labels.size()) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    if (j - i > best_count) {  // ties keep the lexicographically smaller
      best_count = j - i;
      best = labels[i];
    }
    i = j;
  }
  return best;
}

std::string lookup(const std::map<std::string, std::string>& m,
                   const std::string& key) {
  const auto it = m.find(key);
  return it == m.end() ? std::string{} : it->second;
}

}  // namespace

FeatureTable assemble(const TileGrid& z15_grid,
                      std::vector<AssembleInput> features,
                      const std::vector<TileProxy>& proxy,
                      const std::map<std::string, std::string>& landcover_by_qk,
                      const std::map<std::string, std::string>& city_by_qk,
                      const std::map<std::string, bool>& reliable_by_qk) {
  FeatureTable table;
  table.z15.grid = z15_grid;
  const std::size_t n15 = z15_grid.size();
  const std::size_t d = features.size();

  for (const AssembleInput& f : features) {
    if (f.z15_values.size() != n15)
      throw DataError("assemble: feature '" + f.name +
                      "' not aligned to the zoom-15 grid (" +
                      std::to_string(f.z15_values.size()) + " vs " +
                      std::to_string(n15) + " tiles)");
    table.features.push_back({f.name, f.agg});
  }

  table.z15.x.assign(n15, std::vector<double>(d, 0.0));
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < n15; ++i)
      table.z15.x[i][j] = features[j].z15_values[i];

  // Target: proxy rows must live on the grid.
  table.y.assign(n15, 0.0);
  table.reliable.assign(n15, true);
  std::vector<std::string> offenders;
  for (const TileProxy& p : proxy) {
    const auto idx = z15_grid.index_of(p.tile);
    if (!idx) {
      offenders.push_back(quadkey(p.tile));
      continue;
    }
    table.y[*idx] = p.deployed_bw;
  }
  if (!offenders.empty()) {
    std::string msg = "assemble: proxy tiles outside the feature universe:";
    for (const auto& qk : offenders) msg += " " + qk;
    throw DataError(msg);
  }

  table.z15.land_cover.resize(n15);
  table.z15.city.resize(n15);
  for (std::size_t i = 0; i < n15; ++i) {
    const std::string qk = quadkey(z15_grid.tiles()[i]);
    table.z15.land_cover[i] = lookup(landcover_by_qk, qk);
    table.z15.city[i] = lookup(city_by_qk, qk);
    const auto it = reliable_by_qk.find(qk);
    if (it != reliable_by_qk.end()) table.reliable[i] = it->second;
  }

  // Coarser layers: universe = parents of the layer below.
  const auto build_parent_layer = [&](const ZoomLayer& child) {
    ZoomLayer out;
    std::vector<TileId> parents;
    parents.reserve(child.grid.size());
    for (const TileId& t : child.grid.tiles()) parents.push_back(parent(t));
    out.grid = TileGrid(std::move(parents));
    const std::size_t n = out.grid.size();
    out.x.assign(n, std::vector<double>(d, 0.0));
    out.land_cover.resize(n);
    out.city.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> kids;
      for (const TileId& ch : children(out.grid.tiles()[i]))
        if (const auto idx = child.grid.index_of(ch)) kids.push_back(*idx);
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t k : kids) acc += child.x[k][j];
        if (table.features[j].agg == AggKind::mean && !kids.empty())
          acc /= static_cast<double>(kids.size());
        out.x[i][j] = acc;
      }
      const std::string qk = quadkey(out.grid.tiles()[i]);
      out.land_cover[i] = lookup(landcover_by_qk, qk);
      out.city[i] = lookup(city_by_qk, qk);
      if (out.land_cover[i].empty()) {
        std::vector<std::string> labels;
        for (std::size_t k : kids) labels.push_back(child.land_cover[k]);
        out.land_cover[i] = modal_label(std::move(labels));
      }
      if (out.city[i].empty()) {
        std::vector<std::string> labels;
        for (std::size_t k : kids) labels.push_back(child.city[k]);
        out.city[i] = modal_label(std::move(labels));
      }
    }
    return out;
  };

  table.z14 = build_parent_layer(table.z15);
  table.z13 = build_parent_layer(table.z14);
  return table;
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& x,
                               const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw DataError("Standardizer: empty fit set");
  const std::size_t d = x.empty() ? 0 : x.front().size();
  Standardizer s;
  s.mean_.assign(d, 0.0);
  s.sd_.assign(d, 0.0);
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < d; ++j) s.mean_[j] += x[r][j];
  for (std::size_t j = 0; j < d; ++j)
    s.mean_[j] /= static_cast<double>(rows.size());
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[r][j] - s.mean_[j];
      s.sd_[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j)
    s.sd_[j] = std::sqrt(s.sd_[j] / static_cast<double>(rows.size()));
  return s;
}

Standardizer Standardizer::fit_all(const std::vector<std::vector<double>>& x) {
  std::vector<std::size_t> rows(x.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return fit(x, rows);
}

std::vector<std::vector<double>> Standardizer::apply(
    const std::vector<std::vector<double>>& x) const {
  std::vector<std::vector<double>> out = x;
  for (auto& row : out) {
    if (row.size() != mean_.size())
      throw DataError("Standardizer: feature width mismatch");
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = sd_[j] > 0.0 ? (row[j] - mean_[j]) / sd_[j] : 0.0;
  }
  return out;
}

// --- CSV loaders -------------------------------------------------------------

std::vector<PointDataset> load_points_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_name = csv.col("name"), c_lat = csv.col("lat"),
                    c_lon = csv.col("lon"), c_w = csv.col("weight");
  std::map<std::string, PointDataset> by_name;
  std::vector<std::string> order;
  for (const auto& row : csv.rows) {
    auto [it, inserted] = by_name.try_emplace(row[c_name]);
    if (inserted) {
      it->second.name = row[c_name];
      order.push_back(row[c_name]);
    }
    WeightedPoint wp;
    wp.point.lat = parse_double(row[c_lat], "points.lat");
    wp.point.lon = parse_double(row[c_lon], "points.lon");
    wp.weight = row[c_w].empty() ? 1.0 : parse_double(row[c_w], "points.weight");
    it->second.points.push_back(wp);
  }
  std::vector<PointDataset> out;
  for (const std::string& name : order) out.push_back(std::move(by_name[name]));
  return out;
}

std::vector<PolygonMetricDataset> load_zones_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_name = csv.col("name"), c_id = csv.col("zone_id"),
                    c_wkt = csv.col("wkt"), c_metric = csv.col("metric"),
                    c_level = csv.col("level"), c_parent = csv.col("parent_id");
  std::map<std::string, PolygonMetricDataset> by_name;
  std::vector<std::string> order;
  for (const auto& row : csv.rows) {
    auto [it, inserted] = by_name.try_emplace(row[c_name]);
    if (inserted) {
      it->second.name = row[c_name];
      order.push_back(row[c_name]);
    }
    Zone z;
    z.zone_id = row[c_id];
    z.geometry = parse_wkt(row[c_wkt]);
    if (!row[c_metric].empty())
      z.metric = parse_double(row[c_metric], "zones.metric");
    if (row[c_level] == "lower") z.level = AdminLevel::lower;
    else if (row[c_level] == "upper") z.level = AdminLevel::upper;
    else throw DataError("zones.csv: level must be lower|upper, got '" +
                         row[c_level] + "'");
    z.parent_zone_id = row[c_parent];
    it->second.zones.push_back(std::move(z));
  }
  std::vector<PolygonMetricDataset> out;
  for (const std::string& name : order) out.push_back(std::move(by_name[name]));
  return out;
}

std::vector<PolygonShapeDataset> load_shapes_csv(const std::string& path) {
  const CsvTable csv = read_csv(path);
  const std::size_t c_name = csv.col("name"), c_kind = csv.col("kind"),
                    c_wkt = csv.col("wkt");
  std::map<std::string, PolygonShapeDataset> by_name;
  std::vector<std::string> order;
  for (const auto& row : csv.rows) {
    ShapeMetric kind;
    if (row[c_kind] == "count") kind = ShapeMetric::count;
    else if (row[c_kind] == "total_length_m") kind = ShapeMetric::total_length_m;
    else if (row[c_kind] == "total_area_m2") kind = ShapeMetric::total_area_m2;
    else if (row[c_kind] == "density") kind = ShapeMetric::density;
    else throw DataError("shapes.csv: unknown kind '" + row[c_kind] + "'");
    auto [it, inserted] = by_name.try_emplace(row[c_name]);
    if (inserted) {
      it->second.name = row[c_name];
      it->second.derived_metric = kind;
      order.push_back(row[c_name]);
    } else if (it->second.derived_metric != kind) {
      throw DataError("shapes.csv: dataset '" + row[c_name] +
                      "' mixes metric kinds");
    }
    it->second.shapes.push_back(parse_wkt(row[c_wkt]));
  }
  std::vector<PolygonShapeDataset> out;
  for (const std::string& name : order) out.push_back(std::move(by_name[name]));
  return out;
}

std::map<std::string, std::string> load_label_csv(const std::string& path,
                                                  const std::string& key_col,
                                                  const std::string& val_col) {
  const CsvTable csv = read_csv(path);
  const std::size_t ck = csv.col(key_col), cv = csv.col(val_col);
  std::map<std::string, std::string> out;
  for (const auto& row : csv.rows) out[row[ck]] = row[cv];
  return out;
}

void write_features_csv(const std::string& path, const FeatureTable& table,
                        int zoom) {
  const ZoomLayer& layer = table.layer(zoom);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  std::vector<std::string> header{"quadkey"};
  for (const FeatureColumn& f : table.features) header.push_back(f.name);
  out << csv_line(header);
  for (std::size_t i = 0; i < layer.grid.size(); ++i) {
    std::vector<std::string> row{quadkey(layer.grid.tiles()[i])};
    for (std::size_t j = 0; j < table.features.size(); ++j)
      row.push_back(fmt_double(layer.x[i][j]));
    out << csv_line(row);
  }
}

}  // namespace specgrid

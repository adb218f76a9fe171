#ifndef SPECGRID_INGEST_HPP
#define SPECGRID_INGEST_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specgrid/geometry.hpp"
#include "specgrid/geotile.hpp"
#include "specgrid/proxy.hpp"

namespace specgrid {

/// Sorted tile universe at a single zoom with index lookup.
class TileGrid {
 public:
  TileGrid() = default;
  explicit TileGrid(std::vector<TileId> tiles);

  int zoom() const { return zoom_; }
  std::size_t size() const { return tiles_.size(); }
  const std::vector<TileId>& tiles() const { return tiles_; }
  std::optional<std::size_t> index_of(const TileId& t) const;

  /// Indices of the 8-neighbors present in the universe.
  std::vector<std::size_t> neighbor_indices(std::size_t i) const;

 private:
  std::vector<TileId> tiles_;
  int zoom_ = kZoomMax;
};

// --- input datasets ------------------------------------------------------

struct WeightedPoint {
  GeoPoint point;
  double weight = 1.0;
};

struct PointDataset {
  std::string name;
  std::vector<WeightedPoint> points;
};

enum class AdminLevel { lower, upper };

struct Zone {
  std::string zone_id;
  Geometry geometry;
  std::optional<double> metric;  // absent -> imputed from parent
  AdminLevel level = AdminLevel::lower;
  std::string parent_zone_id;  // empty for upper-level zones
};

struct PolygonMetricDataset {
  std::string name;
  std::vector<Zone> zones;
};

enum class ShapeMetric { count, total_length_m, total_area_m2, density };

struct PolygonShapeDataset {
  std::string name;
  std::vector<Geometry> shapes;
  ShapeMetric derived_metric = ShapeMetric::count;
};

/// Issues encountered while processing one dataset.
struct IngestReport {
  std::size_t dropped_points = 0;     // invalid coordinates
  std::size_t dropped_zones = 0;      // zero area / unresolvable metric
  std::size_t dropped_shapes = 0;     // unrepairable geometry
  std::vector<std::string> warnings;
};

// --- per-dataset tile aggregation ----------------------------------------

/// Sum of point weights per containing tile. Exact duplicate coordinates
/// within a tile are deduplicated (first occurrence wins); invalid
/// coordinates are dropped and counted in the report.
std::vector<double> aggregate_points(const PointDataset& ds,
                                     const TileGrid& grid,
                                     IngestReport* report = nullptr);

/// Area-weighted interpolation: each zone's metric is split over the tiles
/// it overlaps in proportion to intersection area (normalized over the tile
/// universe, so per-zone totals are conserved). Lower-level zones with a
/// missing metric inherit their parent zone's metric density first.
std::vector<double> interpolate_polygon_metric(const PolygonMetricDataset& ds,
                                               const TileGrid& grid,
                                               IngestReport* report = nullptr);

/// Per-tile count / clipped length / clipped area / density of shapes.
std::vector<double> derive_shape_metrics(const PolygonShapeDataset& ds,
                                         const TileGrid& grid,
                                         IngestReport* report = nullptr);

enum class QaKind { point, polygon_metric, polygon_shape };

/// Kind-specific cleanup on a tile-aligned value field:
///  - point: a zero tile with >= 6 nonzero 8-neighbors becomes the mean of
///    its present neighbors (isolated-gap smoothing);
///  - polygon_metric: same gap rule, mean taken over the nonzero neighbors;
///  - polygon_shape: values above the 99.9th percentile are clipped to it.
std::vector<double> qa_pipeline(const std::vector<double>& values, QaKind kind,
                                const TileGrid& grid);

// --- feature table --------------------------------------------------------

enum class AggKind { sum, mean };  // how a feature rolls up to coarser zooms

struct FeatureColumn {
  std::string name;
  AggKind agg = AggKind::sum;
};

struct ZoomLayer {
  TileGrid grid;
  std::vector<std::vector<double>> x;   // [tile][feature]
  std::vector<std::string> land_cover;  // per tile
  std::vector<std::string> city;        // per tile ("" when unknown)
};

/// Multi-zoom feature table. Target and reliability exist at zoom 15 only.
struct FeatureTable {
  std::vector<FeatureColumn> features;
  ZoomLayer z13, z14, z15;
  std::vector<double> y;
  std::vector<bool> reliable;

  const ZoomLayer& layer(int zoom) const;
  ZoomLayer& layer(int zoom);
};

struct AssembleInput {
  std::string name;
  AggKind agg = AggKind::sum;
  std::vector<double> z15_values;  // aligned to the zoom-15 grid
};

/// Joins processed zoom-15 features with the proxy target, land cover and
/// city labels, and aggregates features upward to zooms 14 and 13 (sum or
/// mean over present children). Coarse-tile labels are taken from the label
/// maps when present, else by modal vote over children (ties break
/// lexicographically). Proxy tiles outside the grid raise DataError.
FeatureTable assemble(const TileGrid& z15_grid,
                      std::vector<AssembleInput> features,
                      const std::vector<TileProxy>& proxy,
                      const std::map<std::string, std::string>& landcover_by_qk,
                      const std::map<std::string, std::string>& city_by_qk = {},
                      const std::map<std::string, bool>& reliable_by_qk = {});

/// Per-feature z-score transform fitted on a subset of rows (the train
/// split). Zero-variance features map to zero.
class Standardizer {
 public:
  static Standardizer fit(const std::vector<std::vector<double>>& x,
                          const std::vector<std::size_t>& rows);
  /// Fit on every row.
  static Standardizer fit_all(const std::vector<std::vector<double>>& x);

  std::vector<std::vector<double>> apply(
      const std::vector<std::vector<double>>& x) const;

  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& sds() const { return sd_; }

 private:
  std::vector<double> mean_, sd_;
};

// --- CSV loaders (schemas documented in the README) ------------------------

std::vector<PointDataset> load_points_csv(const std::string& path);
std::vector<PolygonMetricDataset> load_zones_csv(const std::string& path);
std::vector<PolygonShapeDataset> load_shapes_csv(const std::string& path);
std::map<std::string, std::string> load_label_csv(const std::string& path,
                                                  const std::string& key_col,
                                                  const std::string& val_col);

void write_features_csv(const std::string& path, const FeatureTable& table,
                        int zoom);

}  // namespace specgrid

#endif  // SPECGRID_INGEST_HPP

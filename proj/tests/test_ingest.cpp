#include "specgrid/ingest.hpp"

#include <cmath>
#include <numeric>

#include <doctest.h>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

using namespace specgrid;

namespace {

// 7x7 zoom-15 universe.
struct Scene {
  TileId ref{15, 9220, 11830};
  TileGrid grid;

  Scene() {
    std::vector<TileId> tiles;
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx)
        tiles.emplace_back(15, ref.x() + dx, ref.y() + dy);
    grid = TileGrid(std::move(tiles));
  }

  TileId at(int dx, int dy) const {
    return TileId(15, ref.x() + dx, ref.y() + dy);
  }
  std::size_t idx(int dx, int dy) const { return *grid.index_of(at(dx, dy)); }

  Polygon tile_polygon(int dx, int dy, double shrink = 0.0) const {
    const TileBounds b = tile_bounds(at(dx, dy));
    const double mlat = shrink * (b.lat_max - b.lat_min);
    const double mlon = shrink * (b.lon_max - b.lon_min);
    Polygon p;
    p.outer = {{b.lon_min + mlon, b.lat_min + mlat},
               {b.lon_max - mlon, b.lat_min + mlat},
               {b.lon_max - mlon, b.lat_max - mlat},
               {b.lon_min + mlon, b.lat_max - mlat}};
    return p;
  }
};

}  // namespace

TEST_CASE("point aggregation") {
  Scene sc;
  PointDataset ds;
  ds.name = "pts";
  const GeoPoint c = centroid(sc.ref);

  SUBCASE("sums unit weights per tile") {
    ds.points = {{c, 1.0},
                 {{c.lat + 1e-5, c.lon}, 1.0},
                 {{c.lat - 1e-5, c.lon}, 1.0}};
    const auto v = aggregate_points(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == 3.0);
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == 3.0);
  }
  SUBCASE("empty dataset gives all zeros") {
    const auto v = aggregate_points(ds, sc.grid);
    for (double x : v) CHECK(x == 0.0);
  }
  SUBCASE("exact duplicates within a tile count once") {
    ds.points = {{c, 2.0}, {c, 2.0}};
    const auto v = aggregate_points(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == 2.0);
  }
  SUBCASE("invalid coordinates are dropped and counted") {
    ds.points = {{{91.0, 0.0}, 1.0}, {{0.0, 500.0}, 1.0}, {c, 1.0}};
    IngestReport report;
    const auto v = aggregate_points(ds, sc.grid, &report);
    CHECK(report.dropped_points == 2);
    CHECK(v[sc.idx(0, 0)] == 1.0);
  }
}

TEST_CASE("polygon-metric interpolation") {
  Scene sc;

  SUBCASE("zone equal to one tile lands there whole") {
    PolygonMetricDataset ds;
    ds.name = "zm";
    ds.zones.push_back(
        {"z1", Geometry{{sc.tile_polygon(0, 0)}, {}}, 100.0,
         AdminLevel::lower, ""});
    const auto v = interpolate_polygon_metric(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) ==
          doctest::Approx(100.0).epsilon(1e-12));
  }

  SUBCASE("two-tile zone splits 50/50") {
    const TileBounds a = tile_bounds(sc.at(0, 0));
    const TileBounds b = tile_bounds(sc.at(1, 0));
    Polygon p;
    p.outer = {{a.lon_min, a.lat_min},
               {b.lon_max, a.lat_min},
               {b.lon_max, a.lat_max},
               {a.lon_min, a.lat_max}};
    PolygonMetricDataset ds;
    ds.name = "zm";
    ds.zones.push_back({"z1", Geometry{{p}, {}}, 100.0, AdminLevel::lower, ""});
    const auto v = interpolate_polygon_metric(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(v[sc.idx(1, 0)] == doctest::Approx(50.0).epsilon(1e-9));
  }

  SUBCASE("conservation on random rectangles") {
    Rng rng(31);
    const TileBounds lo = tile_bounds(sc.at(-3, 3));
    const TileBounds hi = tile_bounds(sc.at(3, -3));
    for (int iter = 0; iter < 100; ++iter) {
      PolygonMetricDataset ds;
      ds.name = "zm";
      double expected = 0.0;
      for (int z = 0; z < 5; ++z) {
        const double lon0 = rng.uniform(lo.lon_min, hi.lon_max - 1e-4);
        const double lat0 = rng.uniform(lo.lat_min, hi.lat_max - 1e-4);
        const double lon1 = rng.uniform(lon0 + 1e-5, hi.lon_max);
        const double lat1 = rng.uniform(lat0 + 1e-5, hi.lat_max);
        Polygon p;
        p.outer = {{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}};
        const double metric = rng.uniform(1.0, 1000.0);
        ds.zones.push_back({"z" + std::to_string(z), Geometry{{p}, {}}, metric,
                            AdminLevel::lower, ""});
        expected += metric;
      }
      const auto v = interpolate_polygon_metric(ds, sc.grid);
      CHECK(std::accumulate(v.begin(), v.end(), 0.0) ==
            doctest::Approx(expected).epsilon(1e-9));
    }
  }

  SUBCASE("missing lower metric imputed from the parent density") {
    PolygonMetricDataset ds;
    ds.name = "zm";
    // Upper zone spanning two tiles with metric 200 (density constant).
    const TileBounds a = tile_bounds(sc.at(0, 0));
    const TileBounds b = tile_bounds(sc.at(1, 0));
    Polygon up;
    up.outer = {{a.lon_min, a.lat_min},
                {b.lon_max, a.lat_min},
                {b.lon_max, a.lat_max},
                {a.lon_min, a.lat_max}};
    ds.zones.push_back(
        {"upper1", Geometry{{up}, {}}, 200.0, AdminLevel::upper, ""});
    ds.zones.push_back({"lower1", Geometry{{sc.tile_polygon(0, 0)}, {}},
                        std::nullopt, AdminLevel::lower, "upper1"});
    IngestReport report;
    const auto v = interpolate_polygon_metric(ds, sc.grid, &report);
    // The lower zone is half the parent's area: imputed metric ~ 100.
    CHECK(v[sc.idx(0, 0)] == doctest::Approx(100.0).epsilon(1e-3));
    CHECK(report.dropped_zones == 0);
  }

  SUBCASE("zero-area zone dropped with a warning") {
    PolygonMetricDataset ds;
    ds.name = "zm";
    Polygon p;
    p.outer = {{0, 0}, {1e-12, 0}, {0, 1e-12}};
    ds.zones.push_back({"z0", Geometry{{p}, {}}, 42.0, AdminLevel::lower, ""});
    IngestReport report;
    const auto v = interpolate_polygon_metric(ds, sc.grid, &report);
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == 0.0);
    CHECK(report.dropped_zones == 1);
    CHECK(!report.warnings.empty());
  }
}

TEST_CASE("shape metrics") {
  Scene sc;

  SUBCASE("1 km road fully inside a tile") {
    // The scene tiles are ~860 m wide; use two tiles' worth via a diagonal-
    // free straight segment in the middle row instead: 500 m in one tile.
    const GeoPoint c = centroid(sc.ref);
    const double target = 500.0;
    const double dlon = target /
                        (kEarthRadiusM *
                         std::cos(c.lat * 3.14159265358979323846 / 180.0)) *
                        180.0 / 3.14159265358979323846;
    PolygonShapeDataset ds;
    ds.name = "roads";
    ds.derived_metric = ShapeMetric::total_length_m;
    ds.shapes.push_back(Geometry{
        {}, {{{c.lon - dlon / 2, c.lat}, {c.lon + dlon / 2, c.lat}}}});
    const auto v = derive_shape_metrics(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == doctest::Approx(target).epsilon(1e-9));
  }

  SUBCASE("segment straddling two tiles splits evenly") {
    const TileBounds a = tile_bounds(sc.at(0, 0));
    const GeoPoint c = centroid(sc.ref);
    const double dlon = 0.4 * (a.lon_max - a.lon_min);
    PolygonShapeDataset ds;
    ds.name = "roads";
    ds.derived_metric = ShapeMetric::total_length_m;
    ds.shapes.push_back(Geometry{
        {}, {{{a.lon_max - dlon, c.lat}, {a.lon_max + dlon, c.lat}}}});
    const auto v = derive_shape_metrics(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] ==
          doctest::Approx(v[sc.idx(1, 0)]).epsilon(1e-9));
    CHECK(v[sc.idx(0, 0)] > 0.0);
  }

  SUBCASE("counts touch every intersected tile once") {
    PolygonShapeDataset ds;
    ds.name = "buildings";
    ds.derived_metric = ShapeMetric::count;
    ds.shapes.push_back(Geometry{{sc.tile_polygon(0, 0, 0.2)}, {}});
    ds.shapes.push_back(Geometry{{sc.tile_polygon(0, 0, 0.3)}, {}});
    ds.shapes.push_back(Geometry{{sc.tile_polygon(1, 1, 0.3)}, {}});
    const auto v = derive_shape_metrics(ds, sc.grid);
    CHECK(v[sc.idx(0, 0)] == 2.0);
    CHECK(v[sc.idx(1, 1)] == 1.0);
  }

  SUBCASE("density vs a brute-force rectangle clipping oracle") {
    Rng rng(32);
    for (int iter = 0; iter < 50; ++iter) {
      // Random rectangle around the center tile.
      const TileBounds b = tile_bounds(sc.ref);
      const double w = b.lon_max - b.lon_min;
      const double h = b.lat_max - b.lat_min;
      const double lon0 = b.lon_min + rng.uniform(-0.5, 0.8) * w;
      const double lat0 = b.lat_min + rng.uniform(-0.5, 0.8) * h;
      const double lon1 = lon0 + rng.uniform(0.1, 1.0) * w;
      const double lat1 = lat0 + rng.uniform(0.1, 1.0) * h;
      Polygon p;
      p.outer = {{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}};
      PolygonShapeDataset ds;
      ds.name = "fp";
      ds.derived_metric = ShapeMetric::density;
      ds.shapes.push_back(Geometry{{p}, {}});
      const auto v = derive_shape_metrics(ds, sc.grid);

      // Oracle: axis-aligned intersection in degree space, scaled like the
      // implementation's local projection.
      const double ilon0 = std::max(lon0, b.lon_min);
      const double ilon1 = std::min(lon1, b.lon_max);
      const double ilat0 = std::max(lat0, b.lat_min);
      const double ilat1 = std::min(lat1, b.lat_max);
      double expect = 0.0;
      if (ilon1 > ilon0 && ilat1 > ilat0) {
        const double frac = (ilon1 - ilon0) * (ilat1 - ilat0) / (w * h);
        expect = frac;  // density of an axis-aligned overlap
      }
      CHECK(v[sc.idx(0, 0)] == doctest::Approx(expect).epsilon(2e-3));
      CHECK(v[sc.idx(0, 0)] >= 0.0);
      CHECK(v[sc.idx(0, 0)] <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("qa pipeline") {
  Scene sc;

  SUBCASE("all-nonzero field unchanged") {
    std::vector<double> v(sc.grid.size(), 3.0);
    CHECK(qa_pipeline(v, QaKind::point, sc.grid) == v);
  }
  SUBCASE("isolated gap filled by the neighbor mean") {
    std::vector<double> v(sc.grid.size(), 4.0);
    v[sc.idx(0, 0)] = 0.0;
    const auto out = qa_pipeline(v, QaKind::point, sc.grid);
    CHECK(out[sc.idx(0, 0)] == doctest::Approx(4.0));
    const auto out2 = qa_pipeline(v, QaKind::polygon_metric, sc.grid);
    CHECK(out2[sc.idx(0, 0)] == doctest::Approx(4.0));
  }
  SUBCASE("gap with too few nonzero neighbors stays") {
    std::vector<double> v(sc.grid.size(), 0.0);
    v[sc.idx(1, 0)] = 5.0;
    v[sc.idx(-1, 0)] = 5.0;
    const auto out = qa_pipeline(v, QaKind::point, sc.grid);
    CHECK(out[sc.idx(0, 0)] == 0.0);
  }
  SUBCASE("outlier clipped to the 99.9th percentile") {
    Rng rng(33);
    std::vector<double> v(sc.grid.size());
    double bulk_max = 0.0;
    for (double& x : v) {
      x = rng.uniform(0.0, 10.0);
      bulk_max = std::max(bulk_max, x);
    }
    v[sc.idx(0, 0)] = 1e6;
    const auto out = qa_pipeline(v, QaKind::polygon_shape, sc.grid);
    CHECK(out[sc.idx(0, 0)] <= 1e6);
    CHECK(out[sc.idx(0, 0)] < 2.0 * bulk_max + 1.0);
    // Everything else is untouched.
    for (std::size_t i = 0; i < v.size(); ++i)
      if (i != sc.idx(0, 0)) CHECK(out[i] == v[i]);
  }
  SUBCASE("non-finite input rejected") {
    std::vector<double> v(sc.grid.size(), 1.0);
    v[0] = std::nan("");
    CHECK_THROWS_AS(qa_pipeline(v, QaKind::point, sc.grid), DataError);
  }
}

TEST_CASE("assemble") {
  Scene sc;
  const std::size_t n = sc.grid.size();

  std::vector<AssembleInput> feats;
  feats.push_back({"count_feat", AggKind::sum, std::vector<double>(n, 0.0)});
  feats.push_back({"intensity", AggKind::mean, std::vector<double>(n, 0.0)});
  Rng rng(34);
  for (std::size_t i = 0; i < n; ++i) {
    feats[0].z15_values[i] = std::floor(rng.uniform(0, 50));
    feats[1].z15_values[i] = rng.uniform(0, 1);
  }

  std::vector<TileProxy> proxy;
  std::map<std::string, std::string> lc;
  for (std::size_t i = 0; i < n; ++i) {
    proxy.push_back({sc.grid.tiles()[i], rng.uniform(1, 100)});
    lc[quadkey(sc.grid.tiles()[i])] = i % 3 ? "builtup" : "grass";
  }

  const FeatureTable table = assemble(sc.grid, feats, proxy, lc);

  SUBCASE("parent count features equal child sums") {
    for (std::size_t p = 0; p < table.z14.grid.size(); ++p) {
      double sum = 0.0;
      for (const TileId& ch : children(table.z14.grid.tiles()[p]))
        if (const auto idx = sc.grid.index_of(ch))
          sum += table.z15.x[*idx][0];
      CHECK(table.z14.x[p][0] == doctest::Approx(sum).epsilon(1e-12));
    }
  }
  SUBCASE("mean features average over present children") {
    for (std::size_t p = 0; p < table.z14.grid.size(); ++p) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (const TileId& ch : children(table.z14.grid.tiles()[p]))
        if (const auto idx = sc.grid.index_of(ch)) {
          sum += table.z15.x[*idx][1];
          ++cnt;
        }
      CHECK(table.z14.x[p][1] ==
            doctest::Approx(sum / static_cast<double>(cnt)).epsilon(1e-12));
    }
  }
  SUBCASE("y is attached from the proxy") {
    for (std::size_t i = 0; i < n; ++i)
      CHECK(table.y[i] == proxy[i].deployed_bw);
  }
  SUBCASE("coarse labels come from the modal child vote") {
    for (std::size_t p = 0; p < table.z14.grid.size(); ++p) {
      CHECK(!table.z14.land_cover[p].empty());
    }
  }
  SUBCASE("proxy tiles outside the universe raise") {
    std::vector<TileProxy> bad = proxy;
    bad.push_back({TileId(15, 0, 0), 1.0});
    CHECK_THROWS_AS(assemble(sc.grid, feats, bad, lc), DataError);
  }
  SUBCASE("misaligned feature vector raises") {
    std::vector<AssembleInput> short_feats = feats;
    short_feats[0].z15_values.pop_back();
    CHECK_THROWS_AS(assemble(sc.grid, short_feats, proxy, lc), DataError);
  }
}

TEST_CASE("standardizer") {
  std::vector<std::vector<double>> x{{1, 5}, {3, 5}, {5, 5}, {7, 5}};

  SUBCASE("zero-variance features map to zero") {
    const Standardizer st = Standardizer::fit_all(x);
    const auto out = st.apply(x);
    for (const auto& row : out) CHECK(row[1] == 0.0);
    double mean0 = 0.0;
    for (const auto& row : out) mean0 += row[0];
    CHECK(mean0 == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("train-only statistics apply as a pure function") {
    const Standardizer st = Standardizer::fit(x, {0, 1});
    const auto once = st.apply(x);
    const auto twice = st.apply(x);
    CHECK(once == twice);
    // Fit rows have mean 2 and sd 1 in feature 0.
    CHECK(once[0][0] == doctest::Approx(-1.0));
    CHECK(once[1][0] == doctest::Approx(1.0));
    CHECK(once[3][0] == doctest::Approx(5.0));
  }
}

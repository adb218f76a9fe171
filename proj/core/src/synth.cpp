#include "specgrid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"
#include "specgrid/geotile.hpp"
#include "specgrid/rng.hpp"

namespace specgrid {

namespace {

constexpr double kPi = 3.14159265358979323846;

const char* kCityNames[] = {"calgary", "gta", "montreal", "ottawa",
                            "vancouver"};

const char* kLandCoverClasses[] = {"builtup", "cropland", "grassland",
                                   "treecover"};

// Point-based decoy features, one weighted point per nonzero tile.
const char* kPointDecoys[] = {
    "pop_age_0_14",      "pop_age_15_64",   "pop_age_65_plus",
    "income_low_earners", "income_mid_earners", "income_high_earners",
    "workers_fulltime",  "workers_remote",  "business_retail",
    "business_food",     "business_professional", "business_health",
    "employees_estimate", "poi_retail",     "poi_education",
    "poi_health",        "poi_recreation",  "bus_stops",
    "rail_stations",     "trip_0_3km",      "trip_3_7km",
    "trip_7_10km"};

struct TileRecord {
  TileId tile;
  std::string city;
  bool coarse_region = false;  // west half of the city
  double households = 0.0;
  double population = 0.0;  // census_population zone metric
  double road_m = 0.0;
  double y = 0.0;
};

std::string polygon_wkt(const TileBounds& b) {
  const auto pt = [](double lon, double lat) {
    return fmt_double(lon) + " " + fmt_double(lat);
  };
  return "POLYGON ((" + pt(b.lon_min, b.lat_min) + ", " +
         pt(b.lon_max, b.lat_min) + ", " + pt(b.lon_max, b.lat_max) + ", " +
         pt(b.lon_min, b.lat_max) + ", " + pt(b.lon_min, b.lat_min) + "))";
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::ofstream f(dir + "/" + name, std::ios::binary);
  if (!f) throw DataError("synth: cannot write " + dir + "/" + name);
  return f;
}

}  // namespace

SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const std::string& out_dir) {
  if (spec.n_cities == 0 || spec.n_cities > 5)
    throw DataError("synth: n_cities must be 1..5");
  if (spec.tiles_per_city < 16)
    throw DataError("synth: tiles_per_city must be >= 16");
  std::filesystem::create_directories(out_dir);

  // City blocks are aligned to the zoom-13 grid and separated by a two-tile
  // gap so no two cities are adjacent at any zoom.
  std::size_t w13 = std::max<std::size_t>(
      2, static_cast<std::size_t>(
             std::llround(std::sqrt(spec.tiles_per_city / 16.0))));
  if (w13 % 2) ++w13;  // even width: the coarse/fine split stays on the grid
  const std::size_t h13 = std::max<std::size_t>(
      1, (spec.tiles_per_city / 16 + w13 - 1) / w13);
  const std::uint32_t base_x13 = 2300, base_y13 = 2947;  // ~45.3N, 79W

  // Planted features: in the coarse half of each city they carry a
  // per-zoom-13-block component (1:4 against the per-tile deviation), so
  // block aggregates hold real information that single tiles mostly hide.
  // In the fine half they are iid per tile, leaving nothing for the coarse
  // scales to contribute there.
  struct Band {
    double lo, hi;
    double draw(Rng& block_rng, Rng& tile_rng, bool blocked) const {
      const double width = hi - lo;
      if (!blocked) return lo + tile_rng.next_double() * width;
      const double base = lo + width * (2.0 / 5.0) +
                          block_rng.next_double() * width / 5.0;
      return base + (tile_rng.next_double() - 0.5) * width * (4.0 / 5.0);
    }
  };
  const Band households_band{5.0, 65.0};
  const Band population_band{20.0, 120.0};
  const Band road_band{50.0, 600.0};

  std::vector<TileRecord> tiles;
  Rng rng(spec.seed);
  std::size_t block_index = 0;
  for (std::size_t c = 0; c < spec.n_cities; ++c) {
    const std::uint32_t ox = base_x13 + static_cast<std::uint32_t>(
                                            c * (w13 + 2));
    Rng crng = rng.split(1000 + c);
    for (std::size_t bx = 0; bx < w13; ++bx) {
      for (std::size_t by = 0; by < h13; ++by) {
        const TileId t13(13, ox + static_cast<std::uint32_t>(bx),
                         base_y13 + static_cast<std::uint32_t>(by));
        Rng brng = rng.split(2000 + block_index++);
        for (const TileId& t14 : children(t13)) {
          for (const TileId& t15 : children(t14)) {
            TileRecord r;
            r.tile = t15;
            r.city = kCityNames[c];
            r.coarse_region = bx < w13 / 2;
            Rng hb = brng.split(0), pb = brng.split(1), rb = brng.split(2);
            const bool blocked = r.coarse_region;
            r.households =
                std::floor(households_band.draw(hb, crng, blocked));
            r.population = population_band.draw(pb, crng, blocked);
            r.road_m = road_band.draw(rb, crng, blocked);
            tiles.push_back(r);
          }
        }
      }
    }
  }
  std::sort(tiles.begin(), tiles.end(),
            [](const TileRecord& a, const TileRecord& b) {
              return a.tile < b.tile;
            });

  // Cross-scale signal: zoom-13 aggregate of the planted linear combination,
  // standardized over the coarse-region blocks (where it applies).
  std::map<TileId, double> block_sum;
  std::map<TileId, bool> block_coarse;
  for (const TileRecord& r : tiles) {
    const TileId b13 = parent(parent(r.tile));
    block_sum[b13] += spec.coeff_households * r.households +
                      spec.coeff_population * r.population +
                      spec.coeff_road_m * r.road_m;
    block_coarse[b13] = r.coarse_region;
  }
  double bmu = 0.0;
  std::size_t bn = 0;
  for (const auto& [t, s] : block_sum)
    if (block_coarse[t]) {
      bmu += s;
      ++bn;
    }
  bmu /= static_cast<double>(std::max<std::size_t>(1, bn));
  double bvar = 0.0;
  for (const auto& [t, s] : block_sum)
    if (block_coarse[t]) bvar += (s - bmu) * (s - bmu);
  const double bsd = std::sqrt(
      std::max(1e-12, bvar / static_cast<double>(std::max<std::size_t>(1, bn))));

  // Noise: iid normals plus a half-weight neighborhood mean. Lightly
  // smoothed, so residual autocorrelation floors stay informative.
  std::map<TileId, double> raw_noise;
  Rng nrng = rng.split(77);
  for (const TileRecord& r : tiles) raw_noise[r.tile] = nrng.normal();
  for (TileRecord& r : tiles) {
    double acc = 0.0;
    int cnt = 0;
    for (const TileId& nb : neighbors8(r.tile)) {
      const auto it = raw_noise.find(nb);
      if (it != raw_noise.end()) {
        acc += it->second;
        ++cnt;
      }
    }
    const double smooth = cnt ? acc / static_cast<double>(cnt) : 0.0;
    const double eps = 0.9 * raw_noise[r.tile] + 0.3 * smooth;
    const double coarse =
        r.coarse_region && spec.cross_scale_strength != 0.0
            ? spec.cross_scale_strength *
                  (block_sum[parent(parent(r.tile))] - bmu) / bsd
            : 0.0;
    r.y = spec.base_demand + spec.coeff_households * r.households +
          spec.coeff_population * r.population + spec.coeff_road_m * r.road_m +
          coarse + spec.noise_sd * eps;
    r.y = std::max(0.5, r.y);
  }

  // --- sites.csv: one omnidirectional site per tile, disk strictly inside
  // the tile so the allocation puts the whole bandwidth on that tile.
  {
    auto f = open_out(out_dir, "sites.csv");
    f << "site_id,lat,lon,radius_m,bw_mhz,eirp_opt\n";
    Rng srng = rng.split(5);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const GeoPoint c = centroid(tiles[i].tile);
      const double radius = 0.45 * tile_width_m(tiles[i].tile);
      const bool has_power = srng.next_double() < 0.2;
      f << csv_line({"s" + std::to_string(i), fmt_double(c.lat),
                     fmt_double(c.lon), fmt_double(radius),
                     fmt_double(tiles[i].y),
                     has_power ? fmt_double(srng.uniform(20.0, 60.0))
                               : std::string{}});
    }
  }

  // --- cells.csv: matching traffic records, busy hour proportional to y.
  {
    auto f = open_out(out_dir, "cells.csv");
    f << "cell_id,lat,lon,radius_m,day,hour,mbps\n";
    Rng crng = rng.split(6);
    const double profile[3] = {0.6, 1.0, 0.8};  // hour-of-day shape
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const GeoPoint c = centroid(tiles[i].tile);
      const double radius = 0.45 * tile_width_m(tiles[i].tile);
      const double level =
          0.3 * tiles[i].y * (1.0 + 0.05 * crng.normal());
      for (int day = 1; day <= 2; ++day)
        for (int hour = 0; hour < 3; ++hour)
          f << csv_line({"c" + std::to_string(i), fmt_double(c.lat),
                         fmt_double(c.lon), fmt_double(radius),
                         std::to_string(day), std::to_string(17 + hour),
                         fmt_double(std::max(0.0, level * profile[hour]))});
    }
  }

  // --- points.csv: planted households plus the decoy point features.
  {
    auto f = open_out(out_dir, "points.csv");
    f << "name,lat,lon,weight\n";
    for (const TileRecord& r : tiles) {
      const GeoPoint c = centroid(r.tile);
      f << csv_line({"households", fmt_double(c.lat), fmt_double(c.lon),
                     fmt_double(r.households)});
    }
    const std::size_t n_decoys = std::size(kPointDecoys);
    for (std::size_t k = 0; k < n_decoys; ++k) {
      Rng drng = rng.split(200 + k);
      const double scale = drng.uniform(5.0, 200.0);
      const double sparsity = k % 4 == 3 ? 0.5 : 0.0;  // some sparse fields
      const bool region_marker =
          std::string(kPointDecoys[k]) == "poi_recreation";
      for (const TileRecord& r : tiles) {
        double w;
        if (region_marker) {
          // Land-use contrast between the two halves of every city; this is
          // what lets a model infer which scale is informative where. Both
          // halves share the same block-level mean, so only the fine zoom
          // sees the contrast (coarse aggregates are blind to it).
          w = r.coarse_region ? (drng.next_double() < 0.5 ? 0.0 : 200.0)
                              : 100.0;
        } else {
          if (drng.next_double() < sparsity) continue;
          w = std::floor(drng.uniform(0.0, scale));
        }
        if (w <= 0.0) continue;
        const TileBounds b = tile_bounds(r.tile);
        const double lat = b.lat_min + 0.3 * (b.lat_max - b.lat_min);
        const double lon = b.lon_min + 0.3 * (b.lon_max - b.lon_min);
        f << csv_line({kPointDecoys[k], fmt_double(lat), fmt_double(lon),
                       fmt_double(w)});
      }
    }
  }

  // --- zones.csv: planted census_population (one lower zone per tile,
  // upper zones per zoom-13 block) and a decoy zone metric.
  {
    auto f = open_out(out_dir, "zones.csv");
    f << "name,zone_id,wkt,metric,level,parent_id\n";
    std::map<TileId, double> upper_sum;
    for (const TileRecord& r : tiles)
      upper_sum[parent(parent(r.tile))] += r.population;
    for (const auto& [t13, total] : upper_sum) {
      f << csv_line({"census_population", "ada_" + quadkey(t13),
                     polygon_wkt(tile_bounds(t13)), fmt_double(total), "upper",
                     ""});
    }
    for (const TileRecord& r : tiles) {
      f << csv_line({"census_population", "da_" + quadkey(r.tile),
                     polygon_wkt(tile_bounds(r.tile)), fmt_double(r.population),
                     "lower", "ada_" + quadkey(parent(parent(r.tile)))});
    }
    Rng zrng = rng.split(300);
    for (const TileRecord& r : tiles) {
      f << csv_line({"daytime_population", "dp_" + quadkey(r.tile),
                     polygon_wkt(tile_bounds(r.tile)),
                     fmt_double(std::floor(zrng.uniform(0.0, 400.0))), "lower",
                     ""});
    }
  }

  // --- shapes.csv: planted road segments (length) plus derived decoys.
  {
    auto f = open_out(out_dir, "shapes.csv");
    f << "name,kind,wkt\n";
    Rng brng = rng.split(400);
    for (const TileRecord& r : tiles) {
      const GeoPoint c = centroid(r.tile);
      // East-west segment of the planted length, centered on the tile.
      const double dlon = r.road_m / (kEarthRadiusM *
                                      std::cos(c.lat * kPi / 180.0)) *
                          180.0 / kPi;
      const std::string wkt = "LINESTRING (" +
                              fmt_double(c.lon - dlon / 2.0) + " " +
                              fmt_double(c.lat) + ", " +
                              fmt_double(c.lon + dlon / 2.0) + " " +
                              fmt_double(c.lat) + ")";
      f << csv_line({"road_length_m", "total_length_m", wkt});
      f << csv_line({"road_segment_count", "count", wkt});

      // Building footprint: square covering a random fraction of the tile.
      const TileBounds b = tile_bounds(r.tile);
      const double frac = std::sqrt(brng.uniform(0.02, 0.35));
      const double dlat2 = (b.lat_max - b.lat_min) * frac;
      const double dlon2 = (b.lon_max - b.lon_min) * frac;
      const TileBounds fb{b.lat_min + 1e-7, b.lat_min + dlat2, b.lon_min + 1e-7,
                          b.lon_min + dlon2};
      const std::string bw = polygon_wkt(fb);
      f << csv_line({"building_area_m2", "total_area_m2", bw});
      f << csv_line({"building_count", "count", bw});
      f << csv_line({"ntl_intensity", "density", bw});
    }
  }

  // --- landcover.csv / cities.csv / truth.csv
  {
    auto f = open_out(out_dir, "landcover.csv");
    f << "quadkey,class\n";
    std::map<TileId, std::string> class_of_z14;
    Rng lrng = rng.split(500);
    for (const TileRecord& r : tiles) {
      const TileId t14 = parent(r.tile);
      auto [it, inserted] = class_of_z14.try_emplace(t14);
      if (inserted)
        it->second = kLandCoverClasses[lrng.next_below(
            std::size(kLandCoverClasses))];
    }
    for (const TileRecord& r : tiles)
      f << csv_line({quadkey(r.tile), class_of_z14[parent(r.tile)]});
  }
  {
    auto f = open_out(out_dir, "cities.csv");
    f << "quadkey,city\n";
    for (const TileRecord& r : tiles)
      f << csv_line({quadkey(r.tile), r.city});
  }
  {
    auto f = open_out(out_dir, "truth.csv");
    f << "quadkey,y_true,region\n";
    for (const TileRecord& r : tiles)
      f << csv_line({quadkey(r.tile), fmt_double(r.y),
                     r.coarse_region ? "coarse" : "fine"});
  }

  SyntheticSummary summary;
  summary.n_tiles = tiles.size();
  for (std::size_t c = 0; c < spec.n_cities; ++c)
    summary.cities.push_back(kCityNames[c]);
  summary.planted_features = {"households", "census_population",
                              "road_length_m"};
  summary.n_features = 3 + std::size(kPointDecoys) + 1 + 4;
  return summary;
}

}  // namespace specgrid

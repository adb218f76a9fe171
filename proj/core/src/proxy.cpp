#include "specgrid/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "specgrid/errors.hpp"
#include "specgrid/stats.hpp"

namespace specgrid {

double busy_hour_mean(const CellTrafficRecord& rec) {
  if (rec.throughput.empty())
    throw DataError("busy_hour_mean: cell '" + rec.cell_id + "' has no samples");
  std::map<int, double> day_max;
  for (const auto& [key, mbps] : rec.throughput) {
    if (!(mbps >= 0.0) || !std::isfinite(mbps))
      throw DataError("busy_hour_mean: bad throughput for cell '" +
                      rec.cell_id + "'");
    auto [it, inserted] = day_max.emplace(key.first, mbps);
    if (!inserted && mbps > it->second) it->second = mbps;
  }
  double sum = 0.0;
  for (const auto& [day, mx] : day_max) sum += mx;
  return sum / static_cast<double>(day_max.size());
}

namespace {

// Coverage fractions of one disk over the given tile universe, sparse.
// Tile order is preserved so downstream sums are deterministic.
std::vector<std::pair<std::size_t, double>> coverage_row(
    const CoverageDisk& disk, const std::vector<TileId>& tiles,
    const std::map<TileId, std::size_t>& index) {
  std::vector<std::pair<std::size_t, double>> row;
  for (const TileId& t : tiles_near_disk(disk, kZoomMax)) {
    const auto it = index.find(t);
    if (it == index.end()) continue;
    const double c = disk_tile_overlap(disk, t);
    if (c > 0.0) row.emplace_back(it->second, c);
  }
  std::sort(row.begin(), row.end());
  return row;
}

std::map<TileId, std::size_t> tile_index(const std::vector<TileId>& tiles) {
  std::map<TileId, std::size_t> index;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (tiles[i].zoom() != kZoomMax)
      throw DataError("proxy: tile universe must be zoom 15");
    index.emplace(tiles[i], i);
  }
  return index;
}

}  // namespace

std::vector<TileTarget> allocate_traffic(
    const std::vector<CellTrafficRecord>& cells,
    const std::vector<TileId>& tiles) {
  const auto index = tile_index(tiles);
  std::vector<TileTarget> out(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) out[i].tile = tiles[i];

  for (const auto& cell : cells) {
    const auto row = coverage_row(cell.coverage, tiles, index);
    double total = 0.0;
    for (const auto& [idx, c] : row) total += c;
    for (const auto& [idx, c] : row) out[idx].coverage_sum += c;
    if (total <= 0.0) continue;
    const double t_bar = busy_hour_mean(cell);
    for (const auto& [idx, c] : row)
      out[idx].traffic_mbps += t_bar * c / total;
  }
  for (auto& t : out) t.reliable = t.coverage_sum >= 0.5;
  return out;
}

std::vector<double> power_weight(const std::vector<SiteRecord>& sites) {
  if (sites.empty()) throw DataError("power_weight: empty site list");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : sites) {
    if (s.eirp) {
      if (!(*s.eirp > 0.0) || !std::isfinite(*s.eirp))
        throw DataError("power_weight: bad EIRP for site '" + s.site_id + "'");
      sum += *s.eirp;
      ++n;
    }
  }
  std::vector<double> phi(sites.size(), 1.0);
  if (n == 0) return phi;
  const double p_mean = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (sites[i].eirp) phi[i] = *sites[i].eirp / p_mean;
  return phi;
}

std::vector<TileProxy> build_proxy(const std::vector<SiteRecord>& sites,
                                   const std::vector<TileId>& tiles) {
  const auto index = tile_index(tiles);
  std::vector<TileProxy> out(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) out[i].tile = tiles[i];
  if (sites.empty()) return out;

  const std::vector<double> phi = power_weight(sites);
  for (std::size_t s = 0; s < sites.size(); ++s) {
    if (!(sites[s].bandwidth_mhz > 0.0))
      throw DataError("build_proxy: nonpositive bandwidth for site '" +
                      sites[s].site_id + "'");
    const auto row = coverage_row(sites[s].coverage, tiles, index);
    // phi is constant across one site's tiles, so it cancels here; kept in
    // the weight so a per-sector coverage model can vary it later.
    double denom = 0.0;
    for (const auto& [idx, c] : row) denom += c * phi[s];
    if (denom <= 0.0) continue;
    for (const auto& [idx, c] : row)
      out[idx].deployed_bw += sites[s].bandwidth_mhz * c * phi[s] / denom;
  }
  return out;
}

OlsResult ols_validate(const std::vector<std::pair<double, double>>& xy) {
  const std::size_t n = xy.size();
  if (n < 3) throw DataError("ols_validate: need at least 3 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : xy) {
    sx += x;
    sy += y;
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx <= 0.0) throw DataError("ols_validate: regressor has zero variance");

  OlsResult r;
  r.n = n;
  r.beta1 = sxy / sxx;
  r.beta0 = my - r.beta1 * mx;
  double sse = 0.0;
  for (const auto& [x, y] : xy) {
    const double e = y - (r.beta0 + r.beta1 * x);
    sse += e * e;
  }
  r.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (r.r_squared < 0.0) r.r_squared = 0.0;
  const double df = static_cast<double>(n - 2);
  if (r.r_squared >= 1.0) {
    r.r_squared = 1.0;
    r.f_statistic = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  } else {
    r.f_statistic = r.r_squared / (1.0 - r.r_squared) * df;
    r.p_value = f_tail(r.f_statistic, 1.0, df);
  }
  return r;
}

}  // namespace specgrid

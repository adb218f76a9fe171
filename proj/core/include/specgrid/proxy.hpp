#ifndef SPECGRID_PROXY_HPP
#define SPECGRID_PROXY_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specgrid/geotile.hpp"

namespace specgrid {

/// LTE cell with per-(day, hour) downlink throughput in Mbps.
struct CellTrafficRecord {
  std::string cell_id;
  CoverageDisk coverage;
  std::map<std::pair<int, int>, double> throughput;  // (day, hour) -> Mbps
};

/// Public deployment record: spectrum bandwidth plus optional average EIRP
/// (already converted to a linear scale by the caller).
struct SiteRecord {
  std::string site_id;
  CoverageDisk coverage;
  double bandwidth_mhz = 0.0;
  std::optional<double> eirp;
};

/// Busy-hour traffic allocated to one zoom-15 tile.
struct TileTarget {
  TileId tile;
  double traffic_mbps = 0.0;
  double coverage_sum = 0.0;  // sum of cell coverage fractions on this tile
  bool reliable = false;      // coverage_sum >= 0.5
};

/// Coverage-weighted deployed bandwidth on one zoom-15 tile.
struct TileProxy {
  TileId tile;
  double deployed_bw = 0.0;
};

struct OlsResult {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double r_squared = 0.0;
  double f_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Mean over days of the daily busy-hour maximum. Throws DataError on an
/// empty record.
double busy_hour_mean(const CellTrafficRecord& rec);

/// Distributes each cell's busy-hour mean over its covered tiles in
/// proportion to the coverage fraction. Cells with zero total coverage
/// contribute nothing. Also accumulates per-tile coverage sums and flags
/// tiles with coverage >= 0.5 as reliable. Output order follows `tiles`.
std::vector<TileTarget> allocate_traffic(
    const std::vector<CellTrafficRecord>& cells,
    const std::vector<TileId>& tiles);

/// phi_s = P_s / mean(P over sites reporting power), 1 when absent.
std::vector<double> power_weight(const std::vector<SiteRecord>& sites);

/// BW_g = sum_s BW_s * omega_sg with omega proportional to coverage times
/// the site's power weight, normalized per site.
std::vector<TileProxy> build_proxy(const std::vector<SiteRecord>& sites,
                                   const std::vector<TileId>& tiles);

/// Simple OLS of y on x in closed form. F = R^2/(1-R^2) * (n-2); p is the
/// F(1, n-2) upper tail. Requires n >= 3 and a nonconstant regressor.
OlsResult ols_validate(const std::vector<std::pair<double, double>>& xy);

}  // namespace specgrid

#endif  // SPECGRID_PROXY_HPP

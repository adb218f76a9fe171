#ifndef SPECGRID_GEOTILE_HPP
#define SPECGRID_GEOTILE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace specgrid {

inline constexpr int kZoomMin = 13;  // coarsest level of the modeled hierarchy
inline constexpr int kZoomMax = 15;  // finest level of the modeled hierarchy

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kMercatorMaxLat = 85.0511287798066;

/// WGS84 point restricted to the Web-Mercator latitude band.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Omnidirectional coverage footprint: geodesic disk of `radius_m` meters.
struct CoverageDisk {
  GeoPoint center;
  double radius_m = 0.0;
};

/// Web-Mercator tile address (Bing/OSM convention: x grows east, y south).
class TileId {
 public:
  TileId() = default;

  /// Throws DataError if zoom is outside [1, 23] or x/y outside [0, 2^zoom).
  TileId(int zoom, std::uint32_t x, std::uint32_t y);

  int zoom() const { return zoom_; }
  std::uint32_t x() const { return x_; }
  std::uint32_t y() const { return y_; }

  friend bool operator==(const TileId& a, const TileId& b) {
    return a.zoom_ == b.zoom_ && a.x_ == b.x_ && a.y_ == b.y_;
  }
  friend bool operator!=(const TileId& a, const TileId& b) { return !(a == b); }

  /// Orders by (zoom, quadkey); within one zoom this equals quadkey order.
  friend bool operator<(const TileId& a, const TileId& b);

 private:
  int zoom_ = 1;
  std::uint32_t x_ = 0;
  std::uint32_t y_ = 0;
};

/// Bing quadkey: one digit per zoom level, MSB first, digit = 2*y_bit + x_bit.
std::string quadkey(const TileId& t);

/// Inverse of quadkey(). Throws DataError on empty strings or bad digits.
TileId parse_quadkey(const std::string& qk);

/// (zoom-1, x/2, y/2). Throws DataError at or below the zoom-13 floor.
TileId parent(const TileId& t);

/// The four zoom+1 tiles covering t, in (x,y), (x+1,y), (x,y+1), (x+1,y+1)
/// order. Throws DataError at or above the zoom-15 ceiling.
std::vector<TileId> children(const TileId& t);

/// Same-zoom tiles sharing an edge or corner. No horizontal wraparound;
/// grid-border tiles return fewer than 8. Deterministic row-major order.
std::vector<TileId> neighbors8(const TileId& t);

/// Tile bounds in degrees (lon linear in x, lat via inverse Mercator).
struct TileBounds {
  double lat_min, lat_max, lon_min, lon_max;
};
TileBounds tile_bounds(const TileId& t);

/// Inverse Web-Mercator at the tile-center pixel.
GeoPoint centroid(const TileId& t);

/// Tile containing the point at the given zoom. Latitude is clamped to the
/// Mercator band; x/y clamped to the grid.
TileId tile_at(const GeoPoint& p, int zoom);

/// Tile edge length in meters at the tile's own latitude (E-W extent of the
/// centroid row). Web-Mercator tiles are locally square, so this doubles as
/// the N-S extent for kernel-scale purposes.
double tile_width_m(const TileId& t);

/// Haversine great-circle distance on a spherical Earth (R = 6,371,000 m).
double geodesic_distance(const GeoPoint& a, const GeoPoint& b);

/// area(disk ∩ tile) / area(tile), estimated on a fixed 16x16 subgrid of
/// sample points (tile-pixel space). Monotone in radius by construction.
double disk_tile_overlap(const CoverageDisk& d, const TileId& t);

/// Tiles at disk's resolution zoom whose bounding box can intersect the disk.
/// Candidate set for coverage scans; callers filter with disk_tile_overlap.
std::vector<TileId> tiles_near_disk(const CoverageDisk& d, int zoom);

}  // namespace specgrid

#endif  // SPECGRID_GEOTILE_HPP

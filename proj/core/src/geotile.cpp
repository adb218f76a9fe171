#include "specgrid/geotile.hpp"

#include <algorithm>
#include <cmath>

#include "specgrid/errors.hpp"

namespace specgrid {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kAbsZoomMin = 1;
constexpr int kAbsZoomMax = 23;
}  // namespace

TileId::TileId(int zoom, std::uint32_t x, std::uint32_t y)
    : zoom_(zoom), x_(x), y_(y) {
  if (zoom < kAbsZoomMin || zoom > kAbsZoomMax)
    throw DataError("TileId: zoom " + std::to_string(zoom) + " out of range");
  const std::uint32_t n = 1u << zoom;
  if (x >= n || y >= n)
    throw DataError("TileId: x/y out of range for zoom " + std::to_string(zoom));
}

bool operator<(const TileId& a, const TileId& b) {
  if (a.zoom_ != b.zoom_) return a.zoom_ < b.zoom_;
  // Quadkey order = Morton order of interleaved (y, x) bits.
  for (int i = a.zoom_; i > 0; --i) {
    const std::uint32_t mask = 1u << (i - 1);
    const int da = ((a.y_ & mask) ? 2 : 0) + ((a.x_ & mask) ? 1 : 0);
    const int db = ((b.y_ & mask) ? 2 : 0) + ((b.x_ & mask) ? 1 : 0);
    if (da != db) return da < db;
  }
  return false;
}

std::string quadkey(const TileId& t) {
  std::string qk;
  qk.reserve(static_cast<std::size_t>(t.zoom()));
  for (int i = t.zoom(); i > 0; --i) {
    char digit = '0';
    const std::uint32_t mask = 1u << (i - 1);
    if (t.x() & mask) digit += 1;
    if (t.y() & mask) digit += 2;
    qk.push_back(digit);
  }
  return qk;
}

TileId parse_quadkey(const std::string& qk) {
  if (qk.empty() || qk.size() > static_cast<std::size_t>(kAbsZoomMax))
    throw DataError("parse_quadkey: bad length '" + qk + "'");
  std::uint32_t x = 0, y = 0;
  for (char c : qk) {
    x <<= 1;
    y <<= 1;
    switch (c) {
      case '0': break;
      case '1': x |= 1; break;
      case '2': y |= 1; break;
      case '3': x |= 1; y |= 1; break;
      default:
        throw DataError("parse_quadkey: bad digit in '" + qk + "'");
    }
  }
  return TileId(static_cast<int>(qk.size()), x, y);
}

TileId parent(const TileId& t) {
  if (t.zoom() <= kZoomMin)
    throw DataError("parent: zoom floor " + std::to_string(kZoomMin) +
                    " reached");
  return TileId(t.zoom() - 1, t.x() / 2, t.y() / 2);
}

std::vector<TileId> children(const TileId& t) {
  if (t.zoom() >= kZoomMax)
    throw DataError("children: zoom ceiling " + std::to_string(kZoomMax) +
                    " reached");
  const int z = t.zoom() + 1;
  const std::uint32_t x = t.x() * 2, y = t.y() * 2;
  return {TileId(z, x, y), TileId(z, x + 1, y), TileId(z, x, y + 1),
          TileId(z, x + 1, y + 1)};
}

std::vector<TileId> neighbors8(const TileId& t) {
  std::vector<TileId> out;
  out.reserve(8);
  const std::int64_t n = std::int64_t{1} << t.zoom();
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const std::int64_t nx = std::int64_t{t.x()} + dx;
      const std::int64_t ny = std::int64_t{t.y()} + dy;
      if (nx < 0 || nx >= n || ny < 0 || ny >= n) continue;
      out.emplace_back(t.zoom(), static_cast<std::uint32_t>(nx),
                       static_cast<std::uint32_t>(ny));
    }
  }
  return out;
}

namespace {

// Inverse Web-Mercator of fractional tile coordinates.
GeoPoint unproject(int zoom, double xf, double yf) {
  const double scale = static_cast<double>(std::uint64_t{1} << zoom);
  GeoPoint p;
  p.lon = xf / scale * 360.0 - 180.0;
  const double n = kPi - 2.0 * kPi * yf / scale;
  p.lat = 180.0 / kPi * std::atan(std::sinh(n));
  return p;
}

}  // namespace

TileBounds tile_bounds(const TileId& t) {
  const GeoPoint nw = unproject(t.zoom(), t.x(), t.y());
  const GeoPoint se = unproject(t.zoom(), t.x() + 1.0, t.y() + 1.0);
  return TileBounds{se.lat, nw.lat, nw.lon, se.lon};
}

GeoPoint centroid(const TileId& t) {
  return unproject(t.zoom(), t.x() + 0.5, t.y() + 0.5);
}

TileId tile_at(const GeoPoint& p, int zoom) {
  const double lat =
      std::clamp(p.lat, -kMercatorMaxLat, kMercatorMaxLat);
  const double scale = static_cast<double>(std::uint64_t{1} << zoom);
  const double xf = (p.lon + 180.0) / 360.0 * scale;
  const double s = std::sin(lat * kPi / 180.0);
  const double yf =
      (0.5 - std::log((1.0 + s) / (1.0 - s)) / (4.0 * kPi)) * scale;
  const auto clamp_idx = [&](double v) {
    const double m = std::clamp(std::floor(v), 0.0, scale - 1.0);
    return static_cast<std::uint32_t>(m);
  };
  return TileId(zoom, clamp_idx(xf), clamp_idx(yf));
}

double tile_width_m(const TileId& t) {
  const GeoPoint c = centroid(t);
  const double circumference = 2.0 * kPi * kEarthRadiusM;
  return circumference * std::cos(c.lat * kPi / 180.0) /
         static_cast<double>(std::uint64_t{1} << t.zoom());
}

double geodesic_distance(const GeoPoint& a, const GeoPoint& b) {
  const double f1 = a.lat * kPi / 180.0;
  const double f2 = b.lat * kPi / 180.0;
  const double df = f2 - f1;
  const double dl = (b.lon - a.lon) * kPi / 180.0;
  const double s1 = std::sin(df / 2.0), s2 = std::sin(dl / 2.0);
  const double h = s1 * s1 + std::cos(f1) * std::cos(f2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double disk_tile_overlap(const CoverageDisk& d, const TileId& t) {
  if (!(d.radius_m > 0.0) || !std::isfinite(d.radius_m))
    throw DataError("disk_tile_overlap: radius must be finite and positive");
  constexpr int kGrid = 16;
  // Each subcell contributes its antialiased coverage from the signed
  // distance of its center to the disk edge. Hard in/out counting at this
  // resolution is off by ~3% for circles tangent to the lattice axes.
  const double subcell_m = tile_width_m(t) / kGrid;
  double acc = 0.0;
  for (int j = 0; j < kGrid; ++j) {
    const double yf = t.y() + (j + 0.5) / kGrid;
    for (int i = 0; i < kGrid; ++i) {
      const double xf = t.x() + (i + 0.5) / kGrid;
      const GeoPoint p = unproject(t.zoom(), xf, yf);
      const double sd = geodesic_distance(p, d.center) - d.radius_m;
      acc += std::clamp(0.5 - sd / subcell_m, 0.0, 1.0);
    }
  }
  return acc / (kGrid * kGrid);
}

std::vector<TileId> tiles_near_disk(const CoverageDisk& d, int zoom) {
  // Pad by one tile so boundary samples are never missed.
  const double dlat = d.radius_m / kEarthRadiusM * 180.0 / kPi;
  const double coslat =
      std::max(0.01, std::cos(d.center.lat * kPi / 180.0));
  const double dlon = dlat / coslat;
  const TileId tl = tile_at({d.center.lat + dlat, d.center.lon - dlon}, zoom);
  const TileId br = tile_at({d.center.lat - dlat, d.center.lon + dlon}, zoom);
  const std::int64_t n = std::int64_t{1} << zoom;
  const std::int64_t x0 = std::max<std::int64_t>(0, std::int64_t{tl.x()} - 1);
  const std::int64_t x1 = std::min<std::int64_t>(n - 1, std::int64_t{br.x()} + 1);
  const std::int64_t y0 = std::max<std::int64_t>(0, std::int64_t{tl.y()} - 1);
  const std::int64_t y1 = std::min<std::int64_t>(n - 1, std::int64_t{br.y()} + 1);
  std::vector<TileId> out;
  for (std::int64_t y = y0; y <= y1; ++y)
    for (std::int64_t x = x0; x <= x1; ++x)
      out.emplace_back(zoom, static_cast<std::uint32_t>(x),
                       static_cast<std::uint32_t>(y));
  return out;
}

}  // namespace specgrid

#ifndef SPECGRID_GEOMETRY_HPP
#define SPECGRID_GEOMETRY_HPP

#include <string>
#include <vector>

#include "specgrid/geotile.hpp"

namespace specgrid {

/// Ring/line vertex in degrees. WKT order is "lon lat".
struct Vertex {
  double lon = 0.0;
  double lat = 0.0;
};

using Ring = std::vector<Vertex>;      // closed; last vertex may repeat first
using Polyline = std::vector<Vertex>;  // open

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

/// Parsed WKT geometry: polygons and/or polylines (multi-variants flattened).
struct Geometry {
  std::vector<Polygon> polygons;
  std::vector<Polyline> lines;
  bool empty() const { return polygons.empty() && lines.empty(); }
};

/// Supports POLYGON, MULTIPOLYGON, LINESTRING, MULTILINESTRING.
/// Throws DataError on anything else.
Geometry parse_wkt(const std::string& wkt);

/// Light repair: closes rings, drops repeated vertices and degenerate rings.
/// Returns false when the outer ring self-intersects (unrepairable here).
bool validate_and_repair(Polygon& poly);

struct BBox {
  double lat_min, lat_max, lon_min, lon_max;
};
BBox geometry_bbox(const Geometry& g);

/// Spherical-Earth area of the polygon (outer minus holes), in m^2.
/// Local equirectangular projection about `ref_lat`; accurate at city scale.
double polygon_area_m2(const Polygon& poly, double ref_lat);

/// Area of polygon ∩ tile, same projection convention as polygon_area_m2
/// (pass the same ref_lat for internally consistent ratios across tiles).
double polygon_tile_area_m2(const Polygon& poly, const TileBounds& tile,
                            double ref_lat);

double polyline_length_m(const Polyline& line);

/// Haversine length of the part of the line inside the tile rectangle.
double polyline_tile_length_m(const Polyline& line, const TileBounds& tile);

/// Exact spherical area of a tile in m^2.
double tile_area_m2(const TileId& t);

}  // namespace specgrid

#endif  // SPECGRID_GEOMETRY_HPP

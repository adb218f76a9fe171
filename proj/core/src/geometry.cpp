#include "specgrid/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "specgrid/errors.hpp"

namespace specgrid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// --- WKT ---------------------------------------------------------------

struct WktCursor {
  const std::string& s;
  std::size_t i = 0;

  void skip_ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip_ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c))
      throw DataError("wkt: expected '" + std::string(1, c) + "' in '" + s +
                      "'");
  }
  double number() {
    skip_ws();
    std::size_t end = i;
    while (end < s.size() &&
           (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '-' ||
            s[end] == '+' || s[end] == '.' || s[end] == 'e' || s[end] == 'E'))
      ++end;
    if (end == i) throw DataError("wkt: expected number in '" + s + "'");
    const double v = std::stod(s.substr(i, end - i));
    i = end;
    return v;
  }
};

Ring parse_point_list(WktCursor& c) {
  Ring r;
  c.expect('(');
  while (true) {
    Vertex v;
    v.lon = c.number();
    v.lat = c.number();
    r.push_back(v);
    if (!c.eat(',')) break;
  }
  c.expect(')');
  return r;
}

Polygon parse_polygon_body(WktCursor& c) {
  Polygon p;
  c.expect('(');
  p.outer = parse_point_list(c);
  while (c.eat(',')) p.holes.push_back(parse_point_list(c));
  c.expect(')');
  return p;
}

std::string upper_prefix(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '(' || std::isspace(static_cast<unsigned char>(c))) break;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

// --- planar helpers (lon/lat treated as x/y) ----------------------------

double shoelace(const Ring& r) {
  if (r.empty()) return 0.0;
  // Center on the first vertex; raw lon/lat products cancel catastrophically
  // at city longitudes.
  const double x0 = r.front().lon, y0 = r.front().lat;
  double a = 0.0;
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex& p = r[i];
    const Vertex& q = r[(i + 1) % n];
    a += (p.lon - x0) * (q.lat - y0) - (q.lon - x0) * (p.lat - y0);
  }
  return 0.5 * a;
}

// Sutherland-Hodgman against one half-plane. keep(v) true = inside.
template <typename Keep, typename Cross>
Ring clip_half(const Ring& in, Keep keep, Cross cross) {
  Ring out;
  const std::size_t n = in.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex& cur = in[i];
    const Vertex& prev = in[(i + n - 1) % n];
    const bool cin = keep(cur), pin = keep(prev);
    if (cin) {
      if (!pin) out.push_back(cross(prev, cur));
      out.push_back(cur);
    } else if (pin) {
      out.push_back(cross(prev, cur));
    }
  }
  return out;
}

Ring clip_ring_to_rect(Ring r, const TileBounds& b) {
  const auto lerp_lon = [](const Vertex& p, const Vertex& q, double lon) {
    const double t = (lon - p.lon) / (q.lon - p.lon);
    return Vertex{lon, p.lat + t * (q.lat - p.lat)};
  };
  const auto lerp_lat = [](const Vertex& p, const Vertex& q, double lat) {
    const double t = (lat - p.lat) / (q.lat - p.lat);
    return Vertex{p.lon + t * (q.lon - p.lon), lat};
  };
  r = clip_half(r, [&](const Vertex& v) { return v.lon >= b.lon_min; },
                [&](const Vertex& p, const Vertex& q) {
                  return lerp_lon(p, q, b.lon_min);
                });
  if (r.size() < 3) return {};
  r = clip_half(r, [&](const Vertex& v) { return v.lon <= b.lon_max; },
                [&](const Vertex& p, const Vertex& q) {
                  return lerp_lon(p, q, b.lon_max);
                });
  if (r.size() < 3) return {};
  r = clip_half(r, [&](const Vertex& v) { return v.lat >= b.lat_min; },
                [&](const Vertex& p, const Vertex& q) {
                  return lerp_lat(p, q, b.lat_min);
                });
  if (r.size() < 3) return {};
  r = clip_half(r, [&](const Vertex& v) { return v.lat <= b.lat_max; },
                [&](const Vertex& p, const Vertex& q) {
                  return lerp_lat(p, q, b.lat_max);
                });
  if (r.size() < 3) return {};
  return r;
}

// Degree-space shoelace scaled to meters about ref_lat.
double ring_area_m2(const Ring& r, double ref_lat) {
  const double sx = kEarthRadiusM * kDegToRad * std::cos(ref_lat * kDegToRad);
  const double sy = kEarthRadiusM * kDegToRad;
  return std::fabs(shoelace(r)) * sx * sy;
}

bool segments_properly_intersect(const Vertex& a, const Vertex& b,
                                 const Vertex& c, const Vertex& d) {
  const auto orient = [](const Vertex& p, const Vertex& q, const Vertex& r) {
    const double v =
        (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon);
    if (v > 0) return 1;
    if (v < 0) return -1;
    return 0;
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

bool ring_self_intersects(const Ring& r) {
  const std::size_t n = r.size();
  if (n < 4) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip adjacent segments (share a vertex).
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_properly_intersect(r[i], r[(i + 1) % n], r[j],
                                      r[(j + 1) % n]))
        return true;
    }
  }
  return false;
}

bool repair_ring(Ring& r) {
  if (!r.empty() && r.front().lon == r.back().lon &&
      r.front().lat == r.back().lat)
    r.pop_back();  // store open; closure is implicit
  Ring out;
  for (const Vertex& v : r) {
    if (!std::isfinite(v.lon) || !std::isfinite(v.lat)) return false;
    if (!out.empty() && out.back().lon == v.lon && out.back().lat == v.lat)
      continue;
    out.push_back(v);
  }
  r = std::move(out);
  return r.size() >= 3;
}

}  // namespace

Geometry parse_wkt(const std::string& wkt) {
  Geometry g;
  const std::string tag = upper_prefix(wkt);
  WktCursor c{wkt};
  c.i = tag.size();
  // Re-scan past the original-cased tag (upper_prefix stopped at '(' or ws).
  c.i = 0;
  while (c.i < wkt.size() && wkt[c.i] != '(' &&
         !std::isspace(static_cast<unsigned char>(wkt[c.i])))
    ++c.i;

  if (tag == "POLYGON") {
    g.polygons.push_back(parse_polygon_body(c));
  } else if (tag == "MULTIPOLYGON") {
    c.expect('(');
    do {
      g.polygons.push_back(parse_polygon_body(c));
    } while (c.eat(','));
    c.expect(')');
  } else if (tag == "LINESTRING") {
    g.lines.push_back(parse_point_list(c));
  } else if (tag == "MULTILINESTRING") {
    c.expect('(');
    do {
      g.lines.push_back(parse_point_list(c));
    } while (c.eat(','));
    c.expect(')');
  } else {
    throw DataError("wkt: unsupported geometry '" + tag + "'");
  }
  return g;
}

bool validate_and_repair(Polygon& poly) {
  if (!repair_ring(poly.outer)) return false;
  if (ring_self_intersects(poly.outer)) return false;
  std::vector<Ring> holes;
  for (Ring& h : poly.holes) {
    if (!repair_ring(h)) continue;  // degenerate hole: drop, keep polygon
    if (ring_self_intersects(h)) return false;
    holes.push_back(std::move(h));
  }
  poly.holes = std::move(holes);
  return true;
}

BBox geometry_bbox(const Geometry& g) {
  BBox b{90.0, -90.0, 180.0, -180.0};
  const auto grow = [&](const Vertex& v) {
    b.lat_min = std::min(b.lat_min, v.lat);
    b.lat_max = std::max(b.lat_max, v.lat);
    b.lon_min = std::min(b.lon_min, v.lon);
    b.lon_max = std::max(b.lon_max, v.lon);
  };
  for (const Polygon& p : g.polygons) {
    for (const Vertex& v : p.outer) grow(v);
    for (const Ring& h : p.holes)
      for (const Vertex& v : h) grow(v);
  }
  for (const Polyline& l : g.lines)
    for (const Vertex& v : l) grow(v);
  return b;
}

double polygon_area_m2(const Polygon& poly, double ref_lat) {
  double a = ring_area_m2(poly.outer, ref_lat);
  for (const Ring& h : poly.holes) a -= ring_area_m2(h, ref_lat);
  return std::max(0.0, a);
}

double polygon_tile_area_m2(const Polygon& poly, const TileBounds& tile,
                            double ref_lat) {
  const Ring outer = clip_ring_to_rect(poly.outer, tile);
  if (outer.empty()) return 0.0;
  double a = ring_area_m2(outer, ref_lat);
  for (const Ring& h : poly.holes) {
    const Ring hc = clip_ring_to_rect(h, tile);
    if (!hc.empty()) a -= ring_area_m2(hc, ref_lat);
  }
  return std::max(0.0, a);
}

double polyline_length_m(const Polyline& line) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i)
    len += geodesic_distance({line[i].lat, line[i].lon},
                             {line[i + 1].lat, line[i + 1].lon});
  return len;
}

double polyline_tile_length_m(const Polyline& line, const TileBounds& tile) {
  // Liang-Barsky parametric clip of each segment in degree space.
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Vertex& p = line[i];
    const Vertex& q = line[i + 1];
    const double dx = q.lon - p.lon, dy = q.lat - p.lat;
    double t0 = 0.0, t1 = 1.0;
    bool keep = true;
    const auto clip1 = [&](double denom, double num) {
      if (denom == 0.0) {
        if (num < 0.0) keep = false;
        return;
      }
      const double t = num / denom;
      if (denom < 0.0) {
        if (t > t1) keep = false;
        else if (t > t0) t0 = t;
      } else {
        if (t < t0) keep = false;
        else if (t < t1) t1 = t;
      }
    };
    clip1(-dx, p.lon - tile.lon_min);
    clip1(dx, tile.lon_max - p.lon);
    clip1(-dy, p.lat - tile.lat_min);
    clip1(dy, tile.lat_max - p.lat);
    if (!keep || t0 >= t1) continue;
    const GeoPoint a{p.lat + t0 * dy, p.lon + t0 * dx};
    const GeoPoint b{p.lat + t1 * dy, p.lon + t1 * dx};
    len += geodesic_distance(a, b);
  }
  return len;
}

double tile_area_m2(const TileId& t) {
  const TileBounds b = tile_bounds(t);
  const double dlon = (b.lon_max - b.lon_min) * kDegToRad;
  return kEarthRadiusM * kEarthRadiusM * dlon *
         (std::sin(b.lat_max * kDegToRad) - std::sin(b.lat_min * kDegToRad));
}

}  // namespace specgrid

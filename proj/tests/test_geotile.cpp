#include "specgrid/geotile.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

using namespace specgrid;

namespace {

TileId random_tile(Rng& rng, int zoom) {
  const std::uint32_t n = 1u << zoom;
  return TileId(zoom, static_cast<std::uint32_t>(rng.next_below(n)),
                static_cast<std::uint32_t>(rng.next_below(n)));
}

}  // namespace

TEST_CASE("quadkey encoding") {
  CHECK(quadkey(TileId(1, 0, 0)) == "0");
  // x = 011b, y = 101b interleave to digits 2, 1, 3.
  CHECK(quadkey(TileId(3, 3, 5)) == "213");
  CHECK(quadkey(TileId(13, 0, 0)) == std::string(13, '0'));
}

TEST_CASE("quadkey round-trips at the modeled zooms") {
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    const int zoom = 13 + static_cast<int>(rng.next_below(3));
    const TileId t = random_tile(rng, zoom);
    CHECK(parse_quadkey(quadkey(t)) == t);
  }
  CHECK_THROWS_AS(parse_quadkey(""), DataError);
  CHECK_THROWS_AS(parse_quadkey("0124"), DataError);
}

TEST_CASE("parent halves coordinates") {
  CHECK(parent(TileId(15, 18432, 11520)) == TileId(14, 9216, 5760));
  CHECK(parent(TileId(14, 9217, 5761)) == TileId(13, 4608, 2880));
  CHECK_THROWS_AS(parent(TileId(13, 1, 1)), DataError);

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const TileId t = random_tile(rng, 14 + static_cast<int>(rng.next_below(2)));
    const std::string qk = quadkey(t);
    CHECK(quadkey(parent(t)) == qk.substr(0, qk.size() - 1));
  }
}

TEST_CASE("children partition the parent") {
  const auto kids = children(TileId(13, 0, 0));
  REQUIRE(kids.size() == 4);
  const std::set<TileId> expect{TileId(14, 0, 0), TileId(14, 1, 0),
                                TileId(14, 0, 1), TileId(14, 1, 1)};
  CHECK(std::set<TileId>(kids.begin(), kids.end()) == expect);
  CHECK_THROWS_AS(children(TileId(15, 0, 0)), DataError);

  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const TileId t = random_tile(rng, 13 + static_cast<int>(rng.next_below(2)));
    for (const TileId& c : children(t)) CHECK(parent(c) == t);
  }
}

TEST_CASE("neighbors8") {
  CHECK(neighbors8(TileId(14, 100, 200)).size() == 8);
  // Corner tile: no wraparound.
  CHECK(neighbors8(TileId(13, 0, 0)).size() == 3);

  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const TileId t = random_tile(rng, 15);
    for (const TileId& nb : neighbors8(t)) {
      const auto back = neighbors8(nb);
      CHECK(std::find(back.begin(), back.end(), t) != back.end());
    }
  }
}

TEST_CASE("centroid is the inverse Mercator of the tile center") {
  const GeoPoint q = centroid(TileId(1, 0, 0));
  CHECK(q.lon == doctest::Approx(-90.0).epsilon(1e-12));

  // First tile past the meridian/equator crossing.
  const GeoPoint c = centroid(TileId(15, 16384, 16384));
  CHECK(c.lon == doctest::Approx(0.0054931640625).epsilon(1e-12));
  CHECK(c.lat == doctest::Approx(-0.005493164054075706).epsilon(1e-9));

  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    const TileId t = random_tile(rng, 13 + static_cast<int>(rng.next_below(3)));
    const TileBounds b = tile_bounds(t);
    const GeoPoint p = centroid(t);
    CHECK(p.lat > b.lat_min);
    CHECK(p.lat < b.lat_max);
    CHECK(p.lon > b.lon_min);
    CHECK(p.lon < b.lon_max);
    CHECK(tile_at(p, t.zoom()) == t);
  }
}

TEST_CASE("geodesic distance") {
  const GeoPoint a{12.34, 56.78};
  CHECK(geodesic_distance(a, a) == 0.0);
  // One degree of longitude at the equator.
  CHECK(geodesic_distance({0, 0}, {0, 1}) ==
        doctest::Approx(111194.92664455874).epsilon(1e-9));

  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint p{rng.uniform(-80, 80), rng.uniform(-179, 179)};
    const GeoPoint q{rng.uniform(-80, 80), rng.uniform(-179, 179)};
    const GeoPoint r{rng.uniform(-80, 80), rng.uniform(-179, 179)};
    const double pq = geodesic_distance(p, q);
    CHECK(pq == doctest::Approx(geodesic_distance(q, p)).epsilon(1e-12));
    CHECK(pq <= geodesic_distance(p, r) + geodesic_distance(r, q) +
                    1e-6 * (pq + 1.0));
  }
}

TEST_CASE("disk-tile overlap via subgrid sampling") {
  const TileId t(15, 9000, 11800);
  const GeoPoint c = centroid(t);
  const double width = tile_width_m(t);

  SUBCASE("disk containing the tile") {
    CHECK(disk_tile_overlap({c, 5.0 * width}, t) == 1.0);
  }
  SUBCASE("disjoint disk") {
    const CoverageDisk far{{c.lat + 1.0, c.lon}, 0.1 * width};
    CHECK(disk_tile_overlap(far, t) == 0.0);
  }
  SUBCASE("inscribed disk covers pi/4 of the tile") {
    const double frac = disk_tile_overlap({c, width / 2.0}, t);
    CHECK(std::fabs(frac - 0.7853981633974483) < 0.02);
  }
  SUBCASE("monotone in radius") {
    double prev = 0.0;
    for (double r = 0.1; r <= 2.0; r += 0.1) {
      const double frac = disk_tile_overlap({c, r * width}, t);
      CHECK(frac >= prev);
      prev = frac;
    }
  }
  SUBCASE("invalid radius") {
    CHECK_THROWS_AS(disk_tile_overlap({c, 0.0}, t), DataError);
  }
}

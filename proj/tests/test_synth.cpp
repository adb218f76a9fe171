#include "specgrid/synth.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "specgrid/csv.hpp"
#include "specgrid/errors.hpp"

using namespace specgrid;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.n_cities = 2;
  spec.tiles_per_city = 64;
  spec.seed = 123;
  return spec;
}

}  // namespace

TEST_CASE("synthetic generation is byte-deterministic") {
  const std::string dir_a = "/tmp/specgrid_synth_a";
  const std::string dir_b = "/tmp/specgrid_synth_b";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  const SyntheticSummary sa = generate_synthetic(tiny_spec(), dir_a);
  const SyntheticSummary sb = generate_synthetic(tiny_spec(), dir_b);
  CHECK(sa.n_tiles == sb.n_tiles);
  CHECK(sa.n_tiles >= 128);
  for (const char* name :
       {"cells.csv", "sites.csv", "points.csv", "zones.csv", "shapes.csv",
        "landcover.csv", "cities.csv", "truth.csv"}) {
    CHECK(slurp(dir_a + "/" + name) == slurp(dir_b + "/" + name));
  }

  SyntheticSpec other = tiny_spec();
  other.seed = 124;
  const std::string dir_c = "/tmp/specgrid_synth_c";
  std::filesystem::remove_all(dir_c);
  generate_synthetic(other, dir_c);
  CHECK(slurp(dir_a + "/truth.csv") != slurp(dir_c + "/truth.csv"));
}

TEST_CASE("synthetic universe is consistent across files") {
  const std::string dir = "/tmp/specgrid_synth_u";
  std::filesystem::remove_all(dir);
  const SyntheticSummary s = generate_synthetic(tiny_spec(), dir);
  CHECK(s.n_features == 30);
  REQUIRE(s.cities.size() == 2);

  const CsvTable lc = read_csv(dir + "/landcover.csv");
  const CsvTable cities = read_csv(dir + "/cities.csv");
  const CsvTable truth = read_csv(dir + "/truth.csv");
  CHECK(lc.rows.size() == s.n_tiles);
  CHECK(cities.rows.size() == s.n_tiles);
  CHECK(truth.rows.size() == s.n_tiles);

  // Every truth row has positive demand and a region tag.
  const std::size_t c_y = truth.col("y_true"), c_r = truth.col("region");
  std::size_t coarse = 0;
  for (const auto& row : truth.rows) {
    CHECK(parse_double(row[c_y], "y") > 0.0);
    if (row[c_r] == "coarse") ++coarse;
    else CHECK(row[c_r] == "fine");
  }
  // Half of each city is the coarse-signal region.
  CHECK(coarse == s.n_tiles / 2);

  // One site per tile, bandwidth = planted truth.
  const CsvTable sites = read_csv(dir + "/sites.csv");
  CHECK(sites.rows.size() == s.n_tiles);
}

TEST_CASE("spec validation") {
  SyntheticSpec bad = tiny_spec();
  bad.n_cities = 0;
  CHECK_THROWS_AS(generate_synthetic(bad, "/tmp/specgrid_synth_x"), DataError);
  bad = tiny_spec();
  bad.tiles_per_city = 4;
  CHECK_THROWS_AS(generate_synthetic(bad, "/tmp/specgrid_synth_x"), DataError);
}

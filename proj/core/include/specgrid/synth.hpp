#ifndef SPECGRID_SYNTH_HPP
#define SPECGRID_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace specgrid {

/// Deterministic synthetic-city generator. Emits the full input file set
/// (cells.csv, sites.csv, points.csv, zones.csv, shapes.csv, landcover.csv,
/// cities.csv) plus truth.csv with the planted ground truth, such that the
/// deployed-bandwidth proxy recovered by the pipeline equals the planted
/// demand exactly (one in-tile site per tile).
///
/// Ground truth per zoom-15 tile:
///   y = base + a . x_planted + gamma * u(z13 block)  [coarse region only]
///       + smoothed noise,
/// where u is the standardized zoom-13 aggregate of the planted features.
/// The west half of every city is the coarse-signal region.
struct SyntheticSpec {
  std::size_t n_cities = 5;        // <= 5 named cities
  std::size_t tiles_per_city = 1000;  // approximate zoom-15 tile count
  double coeff_households = 0.15;  // planted coefficients
  double coeff_population = 0.08;
  double coeff_road_m = 0.01;
  double base_demand = 60.0;
  double cross_scale_strength = 15.0;  // gamma; 0 disables the coarse term
  double noise_sd = 2.0;               // 0 disables noise
  std::uint64_t seed = 7;
};

struct SyntheticSummary {
  std::size_t n_tiles = 0;
  std::vector<std::string> cities;
  std::vector<std::string> planted_features;
  std::size_t n_features = 0;
};

SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const std::string& out_dir);

}  // namespace specgrid

#endif  // SPECGRID_SYNTH_HPP

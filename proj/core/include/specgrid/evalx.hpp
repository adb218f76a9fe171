#ifndef SPECGRID_EVALX_HPP
#define SPECGRID_EVALX_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "specgrid/ingest.hpp"

namespace specgrid {

/// Indivisible spatial unit for CB-CV: a seed zoom-14 tile plus its nearest
/// unassigned neighbors.
struct SpatialCluster {
  std::size_t id = 0;
  std::vector<std::size_t> members;  // zoom-14 row indices
  GeoPoint centroid;
  std::string land_cover;  // modal class among members
};

/// Greedy Stage-1 clustering on the zoom-14 grid: repeatedly seed with the
/// smallest-quadkey unassigned tile and absorb its <= k nearest unassigned
/// tiles by geodesic centroid distance. Edge tiles form smaller clusters.
std::vector<SpatialCluster> stage1_clusters(const ZoomLayer& z14,
                                            std::size_t k = 6);

struct FoldAssignment {
  std::size_t n_folds = 5;
  std::vector<std::size_t> fold_of_cluster;  // per cluster id
  std::vector<std::size_t> fold_of_z15;      // per zoom-15 row
};

/// Stage-2 packing: within each land-cover class, clusters are taken in
/// descending size order and assigned to the fold currently holding the
/// fewest clusters of that class (ties: fewest tiles, then lowest index).
/// Guarantees per-class fold counts differ by <= 1. Throws DataError when
/// there are fewer clusters than folds. fold_of_z15 is left empty; use
/// derive_z15_folds.
FoldAssignment stage2_folds(const std::vector<SpatialCluster>& clusters,
                            std::size_t n_folds = 5);

/// Maps every zoom-15 tile to its cluster's fold via the zoom-14 parent.
void derive_z15_folds(const FeatureTable& table,
                      const std::vector<SpatialCluster>& clusters,
                      FoldAssignment& folds);

/// Throws InvariantError if a cluster is split across folds or per-class
/// cluster counts differ by more than one between folds.
void verify_folds(const std::vector<SpatialCluster>& clusters,
                  const FoldAssignment& folds);

/// Disjoint (train rows, test rows) partition of zoom-15 tiles by city.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> loco_split(
    const FeatureTable& table, const std::string& test_city);

struct Metrics {
  double mae = 0.0, rmse = 0.0, r2 = 0.0;
};

/// Standard MAE / RMSE / R^2 = 1 - SSE/SST. R^2 requires n >= 2 and
/// nonconstant y (DataError otherwise); MAE/RMSE need n >= 1.
Metrics metrics(const std::vector<double>& y, const std::vector<double>& y_hat);

/// Global Moran's I with row-standardized binary weights over the given
/// neighbor lists. Constant fields return 0 by convention. Throws DataError
/// when n < 2 or no node has a neighbor.
double morans_i(const std::vector<double>& values,
                const std::vector<std::vector<std::size_t>>& neighbors);

/// 8-adjacency neighbor lists restricted to a row subset of a grid.
std::vector<std::vector<std::size_t>> subset_adjacency(
    const TileGrid& grid, const std::vector<std::size_t>& rows);

struct TTestResult {
  double t = 0.0, p = 1.0;
};

/// Paired two-sided Student t-test. Throws DataError on n < 2 or zero
/// difference variance.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

/// Step points (value, fraction of samples <= value), sorted by value.
std::vector<std::pair<double, double>> ecdf(std::vector<double> values);

// --- cross-validated evaluation -------------------------------------------

/// Fits on the given zoom-15 rows and returns predictions for every zoom-15
/// row (graph models are transductive, so one call covers all tiles).
using FitPredictFn =
    std::function<std::vector<double>(const std::vector<std::size_t>&)>;

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_tiles = 0;
  Metrics metrics;
  double morans = 0.0;  // residual Moran's I over the validation subgraph
};

struct ModelEval {
  std::string model;
  std::vector<FoldResult> folds;
  double median_mae = 0.0, median_rmse = 0.0, median_morans = 0.0;
  double r2 = 0.0;  // pooled over all validation residuals
  std::vector<std::size_t> eval_rows;   // zoom-15 rows with a prediction
  std::vector<double> residuals;        // aligned with eval_rows (y - yhat)
  std::vector<double> predictions;      // aligned with eval_rows
};

/// Five-fold CB-CV: per fold, train on the other folds' reliable tiles and
/// evaluate on the fold's reliable tiles. Median aggregates are taken over
/// folds; R^2 is pooled.
ModelEval run_cbcv(const std::string& name, const FitPredictFn& fit,
                   const FeatureTable& table, const FoldAssignment& folds);

/// Leave-one-city-out: single train/test split by city.
ModelEval run_loco(const std::string& name, const FitPredictFn& fit,
                   const FeatureTable& table, const std::string& test_city);

}  // namespace specgrid

#endif  // SPECGRID_EVALX_HPP

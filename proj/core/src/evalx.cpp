#include "specgrid/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "specgrid/errors.hpp"
#include "specgrid/stats.hpp"

namespace specgrid {

std::vector<SpatialCluster> stage1_clusters(const ZoomLayer& z14,
                                            std::size_t k) {
  const std::size_t n = z14.grid.size();
  if (n == 0) throw DataError("stage1_clusters: empty zoom-14 grid");
  if (z14.grid.zoom() != 14)
    throw DataError("stage1_clusters: expected a zoom-14 grid");

  std::vector<GeoPoint> centers(n);
  for (std::size_t i = 0; i < n; ++i) centers[i] = centroid(z14.grid.tiles()[i]);

  std::vector<char> assigned(n, 0);
  std::vector<SpatialCluster> clusters;
  // Grid order is quadkey order, so scanning forward finds the smallest
  // unassigned quadkey.
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (assigned[seed]) continue;
    SpatialCluster c;
    c.id = clusters.size();
    c.members.push_back(seed);
    assigned[seed] = 1;

    // k nearest unassigned tiles by geodesic centroid distance; ties break
    // on the smaller quadkey (= smaller row index).
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (assigned[j]) continue;
      cand.emplace_back(geodesic_distance(centers[seed], centers[j]), j);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t m = 0; m < std::min(k, cand.size()); ++m) {
      c.members.push_back(cand[m].second);
      assigned[cand[m].second] = 1;
    }
    std::sort(c.members.begin(), c.members.end());

    double lat = 0.0, lon = 0.0;
    std::vector<std::string> labels;
    for (std::size_t m : c.members) {
      lat += centers[m].lat;
      lon += centers[m].lon;
      labels.push_back(z14.land_cover[m]);
    }
    c.centroid = {lat / static_cast<double>(c.members.size()),
                  lon / static_cast<double>(c.members.size())};
    labels.erase(std::remove(labels.begin(), labels.end(), std::string{}),
                 labels.end());
    std::sort(labels.begin(), labels.end());
    std::size_t best = 0, i = 0;
    while (i < labels.size()) {
      std::size_t j = i;
      while (j < labels.size() && labels[j] == labels[i]) ++j;
      if (j - i > best) {
        best = j - i;
        c.land_cover = labels[i];
      }
      i = j;
    }
    clusters.push_back(std::move(c));
  }
  return clusters;
}

FoldAssignment stage2_folds(const std::vector<SpatialCluster>& clusters,
                            std::size_t n_folds) {
  if (clusters.size() < n_folds)
    throw DataError("stage2_folds: fewer clusters (" +
                    std::to_string(clusters.size()) + ") than folds (" +
                    std::to_string(n_folds) + ")");
  FoldAssignment out;
  out.n_folds = n_folds;
  out.fold_of_cluster.assign(clusters.size(), 0);

  // Group cluster ids per land-cover class, largest clusters first.
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (const SpatialCluster& c : clusters) by_class[c.land_cover].push_back(c.id);

  std::vector<std::size_t> fold_tiles(n_folds, 0);
  for (auto& [label, ids] : by_class) {
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
      if (clusters[a].members.size() != clusters[b].members.size())
        return clusters[a].members.size() > clusters[b].members.size();
      return a < b;
    });
    std::vector<std::size_t> class_count(n_folds, 0);
    for (std::size_t id : ids) {
      std::size_t pick = 0;
      for (std::size_t f = 1; f < n_folds; ++f) {
        if (class_count[f] < class_count[pick] ||
            (class_count[f] == class_count[pick] &&
             fold_tiles[f] < fold_tiles[pick]))
          pick = f;
      }
      out.fold_of_cluster[id] = pick;
      ++class_count[pick];
      fold_tiles[pick] += clusters[id].members.size();
    }
  }
  return out;
}

void derive_z15_folds(const FeatureTable& table,
                      const std::vector<SpatialCluster>& clusters,
                      FoldAssignment& folds) {
  std::vector<std::size_t> cluster_of_z14(table.z14.grid.size(),
                                          static_cast<std::size_t>(-1));
  for (const SpatialCluster& c : clusters)
    for (std::size_t m : c.members) cluster_of_z14[m] = c.id;

  folds.fold_of_z15.assign(table.z15.grid.size(), 0);
  for (std::size_t i = 0; i < table.z15.grid.size(); ++i) {
    const auto p = table.z14.grid.index_of(parent(table.z15.grid.tiles()[i]));
    if (!p || cluster_of_z14[*p] == static_cast<std::size_t>(-1))
      throw InvariantError("derive_z15_folds: zoom-15 tile without a cluster");
    folds.fold_of_z15[i] = folds.fold_of_cluster[cluster_of_z14[*p]];
  }
}

void verify_folds(const std::vector<SpatialCluster>& clusters,
                  const FoldAssignment& folds) {
  std::set<std::size_t> seen;
  for (const SpatialCluster& c : clusters) {
    if (c.members.empty())
      throw InvariantError("verify_folds: empty cluster " + std::to_string(c.id));
    for (std::size_t m : c.members)
      if (!seen.insert(m).second)
        throw InvariantError("verify_folds: tile assigned to two clusters");
    if (folds.fold_of_cluster.at(c.id) >= folds.n_folds)
      throw InvariantError("verify_folds: fold index out of range");
  }
  // Per land-cover class, cluster counts across folds must differ by <= 1.
  std::map<std::string, std::vector<std::size_t>> counts;
  for (const SpatialCluster& c : clusters) {
    auto& v = counts[c.land_cover];
    v.resize(folds.n_folds, 0);
    ++v[folds.fold_of_cluster[c.id]];
  }
  for (const auto& [label, v] : counts) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    if (*mx - *mn > 1)
      throw InvariantError("verify_folds: class '" + label +
                           "' unbalanced across folds");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> loco_split(
    const FeatureTable& table, const std::string& test_city) {
  bool known = false;
  for (const std::string& c : table.z15.city)
    if (c == test_city) {
      known = true;
      break;
    }
  if (!known) throw DataError("loco_split: unknown city '" + test_city + "'");
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < table.z15.grid.size(); ++i) {
    if (table.z15.city[i] == test_city) test.push_back(i);
    else train.push_back(i);
  }
  return {std::move(train), std::move(test)};
}

Metrics metrics(const std::vector<double>& y,
                const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size() || y.empty())
    throw DataError("metrics: need equal nonempty vectors");
  Metrics m;
  double sse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    m.mae += std::fabs(e);
    sse += e * e;
  }
  const double n = static_cast<double>(y.size());
  m.mae /= n;
  m.rmse = std::sqrt(sse / n);

  if (y.size() < 2) throw DataError("metrics: R^2 needs n >= 2");
  const double mu = mean(y);
  double sst = 0.0;
  for (double v : y) sst += (v - mu) * (v - mu);
  if (sst <= 0.0) throw DataError("metrics: R^2 undefined for constant y");
  m.r2 = 1.0 - sse / sst;
  return m;
}

double morans_i(const std::vector<double>& values,
                const std::vector<std::vector<std::size_t>>& neighbors) {
  const std::size_t n = values.size();
  if (n < 2) throw DataError("morans_i: need at least 2 values");
  if (neighbors.size() != n)
    throw DataError("morans_i: neighbor lists misaligned");

  double s0 = 0.0;  // sum of row-standardized weights = rows with neighbors
  for (const auto& nb : neighbors)
    if (!nb.empty()) s0 += 1.0;
  if (s0 == 0.0) throw DataError("morans_i: graph has no edges");

  const double mu = mean(values);
  double denom = 0.0;
  for (double v : values) denom += (v - mu) * (v - mu);
  if (denom <= 0.0) return 0.0;  // constant field convention

  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbors[i].empty()) continue;
    const double w = 1.0 / static_cast<double>(neighbors[i].size());
    double acc = 0.0;
    for (std::size_t j : neighbors[i]) acc += values[j] - mu;
    num += (values[i] - mu) * w * acc;
  }
  return static_cast<double>(n) / s0 * num / denom;
}

std::vector<std::vector<std::size_t>> subset_adjacency(
    const TileGrid& grid, const std::vector<std::size_t>& rows) {
  std::map<std::size_t, std::size_t> local;
  for (std::size_t k = 0; k < rows.size(); ++k) local[rows[k]] = k;
  std::vector<std::vector<std::size_t>> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t nb : grid.neighbor_indices(rows[k])) {
      const auto it = local.find(nb);
      if (it != local.end()) out[k].push_back(it->second);
    }
  }
  return out;
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("paired_t_test: need equal series of length >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double var = sample_variance(d);
  if (var <= 0.0)
    throw DataError("paired_t_test: zero variance in differences");
  const double n = static_cast<double>(d.size());
  TTestResult r;
  r.t = mean(d) / std::sqrt(var / n);
  r.p = t_two_sided(r.t, n - 1.0);
  return r;
}

std::vector<std::pair<double, double>> ecdf(std::vector<double> values) {
  if (values.empty()) throw DataError("ecdf: empty input");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  std::vector<std::pair<double, double>> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    // Fraction <= value: duplicates share the rank of their last occurrence.
    std::size_t j = i;
    while (j + 1 < values.size() && values[j + 1] == values[i]) ++j;
    out[i] = {values[i], static_cast<double>(j + 1) / n};
  }
  return out;
}

namespace {

ModelEval evaluate_splits(
    const std::string& name, const FitPredictFn& fit, const FeatureTable& table,
    const std::vector<std::pair<std::vector<std::size_t>,
                                std::vector<std::size_t>>>& splits) {
  ModelEval ev;
  ev.model = name;
  std::vector<double> fold_mae, fold_rmse, fold_morans;
  double pooled_sse = 0.0;
  std::vector<double> pooled_y;

  for (std::size_t f = 0; f < splits.size(); ++f) {
    const auto& [train_rows, val_rows] = splits[f];
    if (train_rows.empty() || val_rows.empty())
      throw DataError("evaluate: empty train or validation split");
    const std::vector<double> y_hat = fit(train_rows);

    std::vector<double> yv, pv;
    for (std::size_t r : val_rows) {
      yv.push_back(table.y[r]);
      pv.push_back(y_hat[r]);
    }
    FoldResult fr;
    fr.fold = f;
    fr.n_tiles = val_rows.size();
    fr.metrics = metrics(yv, pv);

    std::vector<double> residuals(val_rows.size());
    for (std::size_t k = 0; k < val_rows.size(); ++k)
      residuals[k] = yv[k] - pv[k];
    fr.morans =
        morans_i(residuals, subset_adjacency(table.z15.grid, val_rows));
    ev.folds.push_back(fr);

    fold_mae.push_back(fr.metrics.mae);
    fold_rmse.push_back(fr.metrics.rmse);
    fold_morans.push_back(fr.morans);
    for (std::size_t k = 0; k < val_rows.size(); ++k) {
      ev.eval_rows.push_back(val_rows[k]);
      ev.residuals.push_back(residuals[k]);
      ev.predictions.push_back(pv[k]);
      pooled_sse += residuals[k] * residuals[k];
      pooled_y.push_back(yv[k]);
    }
  }

  ev.median_mae = median(fold_mae);
  ev.median_rmse = median(fold_rmse);
  ev.median_morans = median(fold_morans);
  const double mu = mean(pooled_y);
  double sst = 0.0;
  for (double v : pooled_y) sst += (v - mu) * (v - mu);
  ev.r2 = sst > 0.0 ? 1.0 - pooled_sse / sst : 0.0;
  return ev;
}

}  // namespace

ModelEval run_cbcv(const std::string& name, const FitPredictFn& fit,
                   const FeatureTable& table, const FoldAssignment& folds) {
  if (folds.fold_of_z15.size() != table.z15.grid.size())
    throw DataError("run_cbcv: fold assignment misaligned");
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
      splits(folds.n_folds);
  for (std::size_t i = 0; i < table.z15.grid.size(); ++i) {
    if (!table.reliable[i]) continue;
    for (std::size_t f = 0; f < folds.n_folds; ++f) {
      if (folds.fold_of_z15[i] == f) splits[f].second.push_back(i);
      else splits[f].first.push_back(i);
    }
  }
  return evaluate_splits(name, fit, table, splits);
}

ModelEval run_loco(const std::string& name, const FitPredictFn& fit,
                   const FeatureTable& table, const std::string& test_city) {
  auto [train_rows, test_rows] = loco_split(table, test_city);
  const auto keep_reliable = [&](std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    for (std::size_t r : rows)
      if (table.reliable[r]) out.push_back(r);
    rows = std::move(out);
  };
  keep_reliable(train_rows);
  keep_reliable(test_rows);
  return evaluate_splits(name, fit, table,
                         {{std::move(train_rows), std::move(test_rows)}});
}

}  // namespace specgrid

#include "specgrid/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

namespace specgrid {

Attribution shapley_sampled(const TileEvalFn& model,
                            const std::vector<std::vector<double>>& x,
                            const std::vector<std::size_t>& sample_rows,
                            const std::vector<double>& baseline,
                            const std::vector<std::string>& feature_names,
                            std::size_t permutations, std::uint64_t seed,
                            bool enumerate_all) {
  if (sample_rows.empty()) throw DataError("shapley: empty tile sample");
  if (!enumerate_all && permutations == 0)
    throw DataError("shapley: need at least one permutation");
  const std::size_t d = baseline.size();
  if (feature_names.size() != d)
    throw DataError("shapley: feature names misaligned with baseline");

  Attribution attr;
  attr.feature_names = feature_names;
  attr.sample_rows = sample_rows;
  attr.permutations = permutations;
  attr.seed = seed;
  attr.mean_abs_shap.assign(d, 0.0);
  attr.per_tile.assign(sample_rows.size(), std::vector<double>(d, 0.0));

  const Rng base_rng(seed);
  for (std::size_t s = 0; s < sample_rows.size(); ++s) {
    const std::size_t row = sample_rows[s];
    if (x[row].size() != d)
      throw DataError("shapley: feature width mismatch at sampled tile");
    Rng rng = base_rng.split(row);

    std::vector<double>& phi = attr.per_tile[s];
    const double v_base = model(row, baseline);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::size_t n_orders = 0;

    const auto walk = [&](const std::vector<std::size_t>& perm) {
      std::vector<double> current = baseline;
      double v_prev = v_base;
      for (std::size_t f : perm) {
        current[f] = x[row][f];
        const double v = model(row, current);
        phi[f] += v - v_prev;
        v_prev = v;
      }
      ++n_orders;
    };

    if (enumerate_all) {
      do {
        walk(order);
      } while (std::next_permutation(order.begin(), order.end()));
    } else {
      for (std::size_t m = 0; m < permutations; ++m) {
        // Fisher-Yates on the shared splitmix stream.
        for (std::size_t i = d; i > 1; --i)
          std::swap(order[i - 1], order[rng.next_below(i)]);
        walk(order);
      }
    }
    for (double& v : phi) v /= static_cast<double>(n_orders);
    for (std::size_t f = 0; f < d; ++f)
      attr.mean_abs_shap[f] += std::fabs(phi[f]);
  }
  for (double& v : attr.mean_abs_shap)
    v /= static_cast<double>(sample_rows.size());
  return attr;
}

std::vector<std::size_t> rank_features(const Attribution& attr,
                                       std::size_t top_k) {
  std::vector<std::size_t> order(attr.mean_abs_shap.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (attr.mean_abs_shap[a] != attr.mean_abs_shap[b])
      return attr.mean_abs_shap[a] > attr.mean_abs_shap[b];
    return attr.feature_names[a] < attr.feature_names[b];
  });
  if (order.size() > top_k) order.resize(top_k);
  return order;
}

}  // namespace specgrid

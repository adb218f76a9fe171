#ifndef SPECGRID_EXPLAIN_HPP
#define SPECGRID_EXPLAIN_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace specgrid {

/// Model output at a given zoom-15 row when that tile's feature vector is
/// replaced (every other tile keeps its observed features).
using TileEvalFn =
    std::function<double(std::size_t row, const std::vector<double>&)>;

struct Attribution {
  std::vector<std::string> feature_names;
  std::vector<double> mean_abs_shap;             // per feature
  std::vector<std::size_t> sample_rows;          // explained tiles
  std::vector<std::vector<double>> per_tile;     // [sample][feature]
  std::size_t permutations = 0;
  std::uint64_t seed = 0;
};

/// Permutation-sampling Shapley values. For each sampled tile, features are
/// switched from the baseline to the observed vector in m random orders and
/// the marginal model-output changes are averaged. Efficiency
/// (sum_f phi_f = f(x) - f(baseline)) holds exactly per permutation.
/// enumerate_all walks all d! orders instead (d must stay small).
Attribution shapley_sampled(const TileEvalFn& model,
                            const std::vector<std::vector<double>>& x,
                            const std::vector<std::size_t>& sample_rows,
                            const std::vector<double>& baseline,
                            const std::vector<std::string>& feature_names,
                            std::size_t permutations, std::uint64_t seed,
                            bool enumerate_all = false);

/// Feature indices ordered by descending mean |phi|; ties break on the
/// feature name.
std::vector<std::size_t> rank_features(const Attribution& attr,
                                       std::size_t top_k = 10);

}  // namespace specgrid

#endif  // SPECGRID_EXPLAIN_HPP

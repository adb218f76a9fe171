#include "specgrid/explain.hpp"

#include <cmath>
#include <numeric>

#include <doctest.h>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

using namespace specgrid;

namespace {

// Exact Shapley values for an arbitrary set function via subset enumeration
// (weighted marginal contributions), independent of the permutation-walk
// implementation. Only for small d.
std::vector<double> exact_shapley(
    const std::function<double(const std::vector<bool>&)>& value_fn,
    std::size_t d) {
  std::vector<double> fact(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i)
    fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(d, 0.0);
  for (std::size_t mask = 0; mask < (1u << d); ++mask) {
    std::vector<bool> s(d);
    std::size_t size = 0;
    for (std::size_t f = 0; f < d; ++f)
      if (mask & (1u << f)) {
        s[f] = true;
        ++size;
      }
    const double v = value_fn(s);
    for (std::size_t f = 0; f < d; ++f) {
      if (s[f]) continue;
      std::vector<bool> with = s;
      with[f] = true;
      const double weight =
          fact[size] * fact[d - size - 1] / fact[d];
      phi[f] += weight * (value_fn(with) - v);
    }
  }
  return phi;
}

std::vector<std::string> names(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < d; ++i)
    out.push_back("f" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("linear models have exact attributions for any sample count") {
  const std::size_t d = 4;
  const std::vector<double> coef{2.0, -1.0, 0.5, 0.0};
  const std::vector<std::vector<double>> x{{1.0, 2.0, 3.0, 4.0}};
  const std::vector<double> baseline{0.5, 0.5, 0.5, 0.5};
  const TileEvalFn model = [&](std::size_t, const std::vector<double>& f) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += coef[j] * f[j];
    return acc;
  };

  for (std::size_t m : {1, 3, 8}) {
    const Attribution attr =
        shapley_sampled(model, x, {0}, baseline, names(d), m, 17);
    for (std::size_t j = 0; j < d; ++j)
      CHECK(attr.per_tile[0][j] ==
            doctest::Approx(coef[j] * (x[0][j] - baseline[j])).epsilon(1e-12));
  }
}

TEST_CASE("ignored features get zero attribution") {
  const std::vector<std::vector<double>> x{{1.0, 2.0, 3.0}};
  const std::vector<double> baseline{0.0, 0.0, 0.0};
  const TileEvalFn model = [](std::size_t, const std::vector<double>& f) {
    return 3.0 * f[0] * f[0];  // features 1 and 2 unused
  };
  const Attribution attr =
      shapley_sampled(model, x, {0}, baseline, names(3), 6, 18);
  CHECK(attr.per_tile[0][1] == 0.0);
  CHECK(attr.per_tile[0][2] == 0.0);
  CHECK(attr.per_tile[0][0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("single feature attribution is the full output swing") {
  const std::vector<std::vector<double>> x{{2.0}};
  const std::vector<double> baseline{0.5};
  const TileEvalFn model = [](std::size_t, const std::vector<double>& f) {
    return std::exp(f[0]);
  };
  const Attribution attr =
      shapley_sampled(model, x, {0}, baseline, names(1), 1, 19);
  CHECK(attr.per_tile[0][0] ==
        doctest::Approx(std::exp(2.0) - std::exp(0.5)).epsilon(1e-12));
}

TEST_CASE("full enumeration matches exact Shapley on nonlinear models") {
  Rng rng(20);
  const std::size_t d = 4;
  std::vector<double> xrow(d), baseline(d);
  for (std::size_t j = 0; j < d; ++j) {
    xrow[j] = rng.uniform(0.5, 2.0);
    baseline[j] = rng.uniform(-0.5, 0.5);
  }
  const std::vector<std::vector<double>> x{xrow};
  const TileEvalFn model = [](std::size_t, const std::vector<double>& f) {
    return f[0] * f[1] + std::tanh(f[2]) - 0.3 * f[3] * f[0] +
           0.1 * f[3] * f[3];
  };

  const Attribution attr = shapley_sampled(model, x, {0}, baseline, names(d),
                                           0, 21, /*enumerate_all=*/true);

  const auto value_fn = [&](const std::vector<bool>& s) {
    std::vector<double> f = baseline;
    for (std::size_t j = 0; j < d; ++j)
      if (s[j]) f[j] = xrow[j];
    return model(0, f);
  };
  const std::vector<double> expect = exact_shapley(value_fn, d);
  for (std::size_t j = 0; j < d; ++j)
    CHECK(attr.per_tile[0][j] == doctest::Approx(expect[j]).epsilon(1e-9));

  // Efficiency: contributions telescope to f(x) - f(baseline).
  const double total =
      std::accumulate(attr.per_tile[0].begin(), attr.per_tile[0].end(), 0.0);
  CHECK(total ==
        doctest::Approx(model(0, xrow) - model(0, baseline)).epsilon(1e-9));
}

TEST_CASE("duplicated feature columns share attribution") {
  Rng rng(22);
  const std::size_t d = 4;  // features 0 and 1 identical in value and role
  std::vector<double> xrow{1.7, 1.7, 0.3, -0.4};
  std::vector<double> baseline{0.2, 0.2, 0.0, 0.0};
  const std::vector<std::vector<double>> x{xrow};
  const TileEvalFn model = [](std::size_t, const std::vector<double>& f) {
    return std::sin(f[0] + f[1]) + f[2] * f[3];
  };
  const Attribution attr = shapley_sampled(model, x, {0}, baseline, names(d),
                                           0, 23, /*enumerate_all=*/true);
  CHECK(attr.per_tile[0][0] ==
        doctest::Approx(attr.per_tile[0][1]).epsilon(1e-9));
}

TEST_CASE("seeded determinism") {
  Rng rng(24);
  const std::size_t d = 6;
  std::vector<std::vector<double>> x(3, std::vector<double>(d));
  std::vector<double> baseline(d, 0.0);
  for (auto& row : x)
    for (double& v : row) v = rng.normal();
  const TileEvalFn model = [](std::size_t row, const std::vector<double>& f) {
    double acc = static_cast<double>(row);
    for (std::size_t j = 0; j < f.size(); ++j)
      acc += std::cos(f[j] + static_cast<double>(j));
    return acc;
  };
  const Attribution a =
      shapley_sampled(model, x, {0, 1, 2}, baseline, names(d), 5, 42);
  const Attribution b =
      shapley_sampled(model, x, {0, 1, 2}, baseline, names(d), 5, 42);
  CHECK(a.mean_abs_shap == b.mean_abs_shap);
  CHECK(a.per_tile == b.per_tile);
  const Attribution c =
      shapley_sampled(model, x, {0, 1, 2}, baseline, names(d), 5, 43);
  CHECK(a.per_tile != c.per_tile);
}

TEST_CASE("feature ranking") {
  Attribution attr;
  attr.feature_names = {"b", "a", "c"};
  attr.mean_abs_shap = {3.0, 1.0, 1.0};

  SUBCASE("descending by magnitude") {
    const auto order = rank_features(attr, 10);
    REQUIRE(order.size() == 3);
    CHECK(order[0] == 0);
  }
  SUBCASE("ties break lexicographically by name") {
    const auto order = rank_features(attr, 10);
    CHECK(order[1] == 1);  // "a" before "c"
    CHECK(order[2] == 2);
  }
  SUBCASE("top_k truncates") {
    CHECK(rank_features(attr, 2).size() == 2);
  }
}

TEST_CASE("input validation") {
  const std::vector<std::vector<double>> x{{1.0}};
  const TileEvalFn model = [](std::size_t, const std::vector<double>& f) {
    return f[0];
  };
  CHECK_THROWS_AS(shapley_sampled(model, x, {}, {0.0}, names(1), 3, 1),
                  DataError);
  CHECK_THROWS_AS(shapley_sampled(model, x, {0}, {0.0}, names(1), 0, 1),
                  DataError);
}

#include "specgrid/stats.hpp"

#include <cmath>
#include <vector>

#include <doctest.h>

#include "specgrid/errors.hpp"
#include "specgrid/rng.hpp"

using namespace specgrid;

namespace {

// Quadrature oracle for the F(d1, d2) upper tail: Simpson integration of the
// density from 0 to f, independent of the incomplete-beta implementation.
// Substituting x = t^2 removes the x^(d1/2 - 1) singularity at the origin.
double f_tail_quadrature(double f, double d1, double d2) {
  const double ln_c = std::lgamma((d1 + d2) / 2.0) - std::lgamma(d1 / 2.0) -
                      std::lgamma(d2 / 2.0) + (d1 / 2.0) * std::log(d1 / d2);
  const auto integrand = [&](double t) {
    if (t <= 0.0) return d1 == 1.0 ? 2.0 * std::exp(ln_c) : 0.0;
    return 2.0 * std::exp(ln_c + (d1 - 1.0) * std::log(t) -
                          (d1 + d2) / 2.0 * std::log1p(d1 * t * t / d2));
  };
  const int n = 200000;  // even
  const double top = std::sqrt(f);
  const double hstep = top / n;
  double acc = integrand(0.0) + integrand(top);
  for (int i = 1; i < n; ++i)
    acc += integrand(i * hstep) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - acc * hstep / 3.0;
}

// Same idea for the two-sided Student t tail: p = 1 - 2 * integral(0..|t|).
double t_two_sided_quadrature(double t, double nu) {
  const double ln_c = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                      0.5 * std::log(nu * 3.14159265358979323846);
  const auto density = [&](double x) {
    return std::exp(ln_c - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
  };
  const double a = std::fabs(t);
  const int n = 200000;
  const double hstep = a / n;
  double acc = density(0.0) + density(a);
  for (int i = 1; i < n; ++i) acc += density(i * hstep) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - 2.0 * acc * hstep / 3.0;
}

}  // namespace

TEST_CASE("incomplete beta basics") {
  CHECK(reg_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(reg_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, 1) = x.
  for (double x : {0.1, 0.25, 0.5, 0.9})
    CHECK(reg_incomplete_beta(1.0, 1.0, x) ==
          doctest::Approx(x).epsilon(1e-12));
  // Symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(0.5, 30.0), b = rng.uniform(0.5, 30.0);
    const double x = rng.uniform(0.01, 0.99);
    CHECK(reg_incomplete_beta(a, b, x) ==
          doctest::Approx(1.0 - reg_incomplete_beta(b, a, 1.0 - x))
              .epsilon(1e-10));
  }
}

TEST_CASE("F tail matches the quadrature oracle") {
  // The spec's reference point: F(1, 60) at 4.0 is about 0.0501.
  const double p = f_tail(4.0, 1.0, 60.0);
  CHECK(p == doctest::Approx(0.0501).epsilon(0.02));
  CHECK(p == doctest::Approx(f_tail_quadrature(4.0, 1.0, 60.0)).epsilon(1e-8));

  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const double f = rng.uniform(0.1, 8.0);
    const double d1 = 1.0 + static_cast<double>(rng.next_below(5));
    const double d2 = 5.0 + static_cast<double>(rng.next_below(100));
    CHECK(f_tail(f, d1, d2) ==
          doctest::Approx(f_tail_quadrature(f, d1, d2)).epsilon(1e-7));
  }
}

TEST_CASE("t two-sided tail matches the quadrature oracle") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(0.1, 5.0);
    const double nu = 2.0 + static_cast<double>(rng.next_below(60));
    CHECK(t_two_sided(t, nu) ==
          doctest::Approx(t_two_sided_quadrature(t, nu)).epsilon(1e-7));
  }
}

TEST_CASE("median and percentile") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS_AS(median({}), DataError);

  std::vector<double> v;
  for (int i = 0; i <= 100; ++i) v.push_back(i);
  CHECK(percentile(v, 50.0) == doctest::Approx(50.0));
  CHECK(percentile(v, 99.9) == doctest::Approx(99.9));
  CHECK(percentile(v, 0.0) == 0.0);
  CHECK(percentile(v, 100.0) == 100.0);
}

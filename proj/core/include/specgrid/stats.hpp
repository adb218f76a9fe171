#ifndef SPECGRID_STATS_HPP
#define SPECGRID_STATS_HPP

#include <cstddef>
#include <vector>

namespace specgrid {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
/// Accurate to ~1e-12 for the parameter ranges used here (F and t tails).
double reg_incomplete_beta(double a, double b, double x);

/// Upper tail P(F > f) of the Fisher F(d1, d2) distribution.
double f_tail(double f, double d1, double d2);

/// Two-sided tail 2*P(T > |t|) of Student's t with nu degrees of freedom.
double t_two_sided(double t, double nu);

double mean(const std::vector<double>& v);
/// Unbiased (n-1) sample variance; 0 for n < 2.
double sample_variance(const std::vector<double>& v);
/// Median (average of middle pair for even n). Throws DataError when empty.
double median(std::vector<double> v);
/// Percentile in [0,100] with linear interpolation between order statistics.
double percentile(std::vector<double> v, double p);

}  // namespace specgrid

#endif  // SPECGRID_STATS_HPP

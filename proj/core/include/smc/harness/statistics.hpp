#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace smc::harness {

struct Moments {
    double mean = 0.0;
    double variance = 0.0;  ///< unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

/// Sample moments; skewness and kurtosis use the plain (biased) estimators
/// m3 / m2^{3/2} and m4 / m2^2 - 3.
Moments sample_moments(std::span<const double> xs);

/// Anderson-Darling A^2 of the sample against the standard normal law.
double anderson_darling_normal(std::span<const double> xs);

/// Two-sided confidence interval for sigma^2 from s^2 with `dof` degrees of freedom.
std::pair<double, double> variance_interval(double s2, double dof, double level = 0.95);

/// Quantile of F(d1, d2) at cumulative probability p.
double f_quantile(double d1, double d2, double p);

struct SlopeFit {
    std::vector<double> grid;
    std::vector<double> values;
    double slope = 0.0;
    double intercept = 0.0;
    double residual_se = 0.0;
    double slope_half_width = 0.0;  ///< 95% t-interval
};

/// Ordinary least squares of log(values) on log(grid).
SlopeFit fit_loglog_slope(std::span<const double> grid, std::span<const double> values);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

}  // namespace smc::harness

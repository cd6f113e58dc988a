#include "smc/harness/statistics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "smc/error.hpp"
#include "smc/summation.hpp"

namespace smc::harness {

Moments sample_moments(std::span<const double> xs) {
    if (xs.size() < 2) throw Error("moments need at least two values");
    Moments out;
    out.mean = shifted_mean(xs);
    CompensatedSum s2, s3, s4;
    for (double x : xs) {
        const double d = x - out.mean;
        s2.add(d * d);
        s3.add(d * d * d);
        s4.add(d * d * d * d);
    }
    const double n = static_cast<double>(xs.size());
    const double m2 = s2.value() / n;
    out.variance = s2.value() / (n - 1.0);
    if (m2 > 0.0) {
        out.skewness = s3.value() / n / std::pow(m2, 1.5);
        out.excess_kurtosis = s4.value() / n / (m2 * m2) - 3.0;
    }
    return out;
}

double anderson_darling_normal(std::span<const double> xs) {
    if (xs.empty()) throw Error("Anderson-Darling needs data");
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const boost::math::normal_distribution<double> unit;
    const auto n = static_cast<double>(sorted.size());
    CompensatedSum acc;
    const std::size_t size = sorted.size();
    for (std::size_t i = 0; i < size; ++i) {
        const double lo = boost::math::cdf(unit, sorted[i]);
        const double hi = boost::math::cdf(boost::math::complement(unit, sorted[size - 1 - i]));
        const double term = std::log(std::max(lo, 1e-300)) + std::log(std::max(hi, 1e-300));
        acc.add((2.0 * static_cast<double>(i) + 1.0) * term);
    }
    return -n - acc.value() / n;
}

std::pair<double, double> variance_interval(double s2, double dof, double level) {
    const boost::math::chi_squared_distribution<double> chi(dof);
    const double alpha = 1.0 - level;
    const double upper_q = boost::math::quantile(chi, 1.0 - alpha / 2.0);
    const double lower_q = boost::math::quantile(chi, alpha / 2.0);
    return {dof * s2 / upper_q, dof * s2 / lower_q};
}

double f_quantile(double d1, double d2, double p) {
    return boost::math::quantile(boost::math::fisher_f_distribution<double>(d1, d2), p);
}

SlopeFit fit_loglog_slope(std::span<const double> grid, std::span<const double> values) {
    if (grid.size() != values.size()) throw Error("grid and values differ in length");
    if (grid.size() < 3) throw Error("slope fit needs at least 3 points");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(values[i] > 0.0)) throw Error("slope fit needs positive values");
        if (!(grid[i] > 0.0)) throw Error("slope fit needs a positive grid");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("slope fit grid must be strictly increasing");
    }
    std::vector<double> lx(grid.size()), ly(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        lx[i] = std::log(grid[i]);
        ly[i] = std::log(values[i]);
    }
    const LinearFit lin = fit_linear(lx, ly);
    SlopeFit out;
    out.grid.assign(grid.begin(), grid.end());
    out.values.assign(values.begin(), values.end());
    out.slope = lin.slope;
    out.intercept = lin.intercept;
    const double mx = shifted_mean(lx);
    CompensatedSum sxx, sse;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx.add((lx[i] - mx) * (lx[i] - mx));
        const double r = ly[i] - (lin.intercept + lin.slope * lx[i]);
        sse.add(r * r);
    }
    const double dof = static_cast<double>(lx.size()) - 2.0;
    out.residual_se = std::sqrt(sse.value() / dof);
    const double tq = boost::math::quantile(boost::math::students_t_distribution<double>(dof), 0.975);
    out.slope_half_width = tq * out.residual_se / std::sqrt(sxx.value());
    return out;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("linear fit needs two or more paired points");
    const double mx = shifted_mean(x);
    const double my = shifted_mean(y);
    CompensatedSum sxx, sxy, syy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        sxy.add((x[i] - mx) * (y[i] - my));
        syy.add((y[i] - my) * (y[i] - my));
    }
    if (!(sxx.value() > 0.0)) throw Error("linear fit needs distinct abscissae");
    LinearFit out;
    out.slope = sxy.value() / sxx.value();
    out.intercept = my - out.slope * mx;
    out.r_squared = syy.value() > 0.0 ? sxy.value() * sxy.value() / (sxx.value() * syy.value()) : 1.0;
    return out;
}

}  // namespace smc::harness

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "smc/models/beta_bernoulli.hpp"
#include "smc/resampling.hpp"

namespace smc {

struct FixedParameterVariances {
    double sis = 0.0;
    double multinomial = 0.0;
    double residual = 0.0;
};

/// Asymptotic variances of the fixed-parameter filter (identity kernel,
/// pi~_t = pi_{t-1}) on the Beta-Bernoulli model, by adaptive Gauss-Kronrod
/// quadrature on (0, 1):
///   sis:         int pi_t^2 / pi~_0 phibar^2
///   multinomial: sis + sum_{k=1}^t int pi_t^2 / pi_{k-1} phibar^2
///   residual:    sis + sum_{k=0}^{t-1} R_k((pi_t / pi_k) phibar)
/// The object caches the discontinuities of r(v_k); it is not thread-safe.
class BetaBernoulliVariance {
public:
    BetaBernoulliVariance(BetaBernoulliModel model, std::function<double(double)> phi);

    double posterior_mean(std::size_t t) const;
    double sis(std::size_t t) const;
    double multinomial(std::size_t t) const;
    double residual(std::size_t t) const;
    FixedParameterVariances at(std::size_t t) const;
    double value(std::size_t t, SelectionScheme scheme) const;

    /// Points in (0, 1) where floor(v_k) jumps.
    const std::vector<double>& weight_breakpoints(std::size_t k) const;

private:
    BetaBernoulliModel model_;
    std::function<double(double)> phi_;
    std::vector<BetaShape> shapes_;
    mutable std::vector<std::optional<std::vector<double>>> breakpoints_;
};

}  // namespace smc

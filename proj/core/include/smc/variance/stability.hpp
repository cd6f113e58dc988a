#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "smc/models/finite_hmm.hpp"

namespace smc {

/// Half the largest L1 distance between two rows of a row-stochastic table.
double dobrushin_coefficient(const Eigen::MatrixXd& kernel);

struct StabilityParams {
    double kernel_ratio = 1.0;  ///< C
    double f_low = 1.0;
    double f_high = 1.0;
    double variation = 1.0;     ///< sup phi - inf phi

    double emission_spread() const { return f_high / f_low - 1.0; }  ///< C_f
    double rho() const { return 1.0 - 1.0 / kernel_ratio; }
    double rho2() const { return 1.0 - 1.0 / (kernel_ratio * kernel_ratio); }
    void validate() const;
};

/// Constants recomputed from the model tables; throws when the kernel ratio is
/// unbounded or an emission probability vanishes.
StabilityParams stability_params(const FiniteHMM& model, double variation);

/// sum_{k=0}^t C^4 (f_high/f_low)^2 exp(2 rho C_f / (1 - rho2)) rho2^{2(t-k)} variation^2.
double stability_bound(const StabilityParams& params, std::size_t t);

/// Limit of stability_bound as t grows.
double stability_bound_limit(const StabilityParams& params);

/// prod_{i=1}^{t-k} (1 + rho rho2^{i-1} C_f) rho2^{t-k} variation: bound on the
/// variation of the weight cascade E_{k+1:t}(phibar).
double cascade_variation_bound(const StabilityParams& params, std::size_t t, std::size_t k);

/// sup - inf of a table.
double variation(const Eigen::VectorXd& values);

struct VariationProductCheck {
    bool hypotheses_hold = false;  ///< phi >= 0, sup psi >= 0, inf psi <= 0
    double product_variation = 0.0;
    double bound = 0.0;            ///< sup phi * variation(psi)
    bool holds = false;            ///< only meaningful when hypotheses_hold
};

VariationProductCheck variation_product_check(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi);

}  // namespace smc

#include "smc/variance/stability.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "smc/error.hpp"

namespace smc {

double dobrushin_coefficient(const Eigen::MatrixXd& kernel) {
    if (kernel.rows() == 0) throw Error("kernel has no rows");
    for (Eigen::Index r = 0; r < kernel.rows(); ++r) {
        if ((kernel.row(r).array() < 0.0).any() || std::abs(kernel.row(r).sum() - 1.0) > 1e-10) {
            throw Error("kernel row " + std::to_string(r) + " is not a probability vector");
        }
    }
    double worst = 0.0;
    for (Eigen::Index a = 0; a < kernel.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < kernel.rows(); ++b) {
            worst = std::max(worst, 0.5 * (kernel.row(a) - kernel.row(b)).cwiseAbs().sum());
        }
    }
    return std::min(worst, 1.0);
}

void StabilityParams::validate() const {
    if (!(kernel_ratio >= 1.0) || !std::isfinite(kernel_ratio)) throw Error("kernel ratio C must be finite and >= 1");
    if (!(f_low > 0.0) || !(f_high >= f_low) || !std::isfinite(f_high)) {
        throw Error("emission bounds need 0 < f_low <= f_high < inf");
    }
    if (!std::isfinite(variation)) throw Error("unbounded functional");
    if (variation < 0.0) throw Error("variation must be nonnegative");
}

StabilityParams stability_params(const FiniteHMM& model, double variation_of_phi) {
    const HmmBounds b = hmm_bounds(model);
    if (!std::isfinite(b.kernel_ratio)) throw Error("kernel ratio is unbounded: a transition column has a zero entry");
    if (!(b.emission_low > 0.0)) throw Error("emission lower bound is zero");
    StabilityParams p{b.kernel_ratio, b.emission_low, b.emission_high, variation_of_phi};
    p.validate();
    return p;
}

namespace {

double bound_prefactor(const StabilityParams& p) {
    p.validate();
    const double c2 = p.kernel_ratio * p.kernel_ratio;
    const double ratio = p.f_high / p.f_low;
    // rho2 = 1 only if C is infinite, which validate() excludes; rho = 0 when C = 1.
    const double expo = p.rho() == 0.0 ? 0.0 : 2.0 * p.rho() * p.emission_spread() / (1.0 - p.rho2());
    return c2 * c2 * ratio * ratio * std::exp(expo) * p.variation * p.variation;
}

}  // namespace

double stability_bound(const StabilityParams& params, std::size_t t) {
    const double pre = bound_prefactor(params);
    const double r2 = params.rho2() * params.rho2();
    double acc = 0.0;
    double power = 1.0;  // rho2^{2(t-k)}, with 0^0 = 1
    for (std::size_t j = 0; j <= t; ++j) {
        acc += power;
        power *= r2;
    }
    return pre * acc;
}

double stability_bound_limit(const StabilityParams& params) {
    return bound_prefactor(params) / (1.0 - params.rho2() * params.rho2());
}

double cascade_variation_bound(const StabilityParams& params, std::size_t t, std::size_t k) {
    params.validate();
    if (k > t) throw Error("cascade bound needs k <= t");
    double prod = 1.0;
    double r2pow = 1.0;
    for (std::size_t i = 1; i <= t - k; ++i) {
        prod *= 1.0 + params.rho() * r2pow * params.emission_spread();
        r2pow *= params.rho2();
    }
    return prod * r2pow * params.variation;
}

double variation(const Eigen::VectorXd& values) {
    if (values.size() == 0) return 0.0;
    return values.maxCoeff() - values.minCoeff();
}

VariationProductCheck variation_product_check(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi) {
    if (phi.size() != psi.size() || phi.size() == 0) throw Error("tables must be nonempty and of equal size");
    VariationProductCheck out;
    out.hypotheses_hold = phi.minCoeff() >= 0.0 && psi.maxCoeff() >= 0.0 && psi.minCoeff() <= 0.0;
    out.product_variation = variation(phi.cwiseProduct(psi));
    out.bound = phi.maxCoeff() * variation(psi);
    out.holds = out.hypotheses_hold && out.product_variation <= out.bound * (1.0 + 1e-12) + 1e-300;
    return out;
}

}  // namespace smc

#include "smc/models/linear_gaussian.hpp"

#include <cmath>
#include <memory>

#include "smc/error.hpp"

namespace smc {

void LinearGaussianSSM::validate() const {
    if (!(sigma > 0.0) || !(tau > 0.0) || !(initial_sd > 0.0)) {
        throw Error("linear Gaussian model needs positive sigma, tau and initial sd");
    }
    if (!std::isfinite(a) || !std::isfinite(initial_mean)) throw Error("non-finite model parameter");
    for (double y : observations) {
        if (!std::isfinite(y)) throw Error("non-finite observation");
    }
}

std::vector<KalmanStep> kalman_filter(const LinearGaussianSSM& model) {
    model.validate();
    std::vector<KalmanStep> out;
    out.push_back({model.initial_mean, model.initial_sd * model.initial_sd});
    const double tau2 = model.tau * model.tau;
    for (double y : model.observations) {
        const KalmanStep& prev = out.back();
        const double pm = model.a * prev.mean;
        const double pv = model.a * model.a * prev.variance + model.sigma * model.sigma;
        const double gain = pv / (pv + tau2);
        out.push_back({pm + gain * (y - pm), (1.0 - gain) * pv});
    }
    return out;
}

GaussianSample simulate_gaussian(const LinearGaussianSSM& model, std::size_t steps, RngStream& rng) {
    model.validate();
    GaussianSample out;
    out.states.push_back(rng.normal(model.initial_mean, model.initial_sd));
    for (std::size_t t = 1; t <= steps; ++t) {
        out.states.push_back(model.a * out.states.back() + model.sigma * rng.normal());
        out.observations.push_back(out.states.back() + model.tau * rng.normal());
    }
    return out;
}

ModelSpec<double> make_gaussian_model(const LinearGaussianSSM& model) {
    model.validate();
    auto m = std::make_shared<const LinearGaussianSSM>(model);
    ModelSpec<double> spec;
    spec.name = "linear_gaussian";
    spec.horizon = model.horizon();
    spec.sample_initial = [m](RngStream& rng) { return rng.normal(m->initial_mean, m->initial_sd); };
    spec.kernel_for_step = [m](std::size_t, std::span<const double>) -> MutationKernel<double> {
        return [m](const double& x, RngStream& rng) { return m->a * x + m->sigma * rng.normal(); };
    };
    spec.log_weight = [m](std::size_t t, const double& x, const double* parent) {
        if (t == 0 || parent == nullptr) return 0.0;
        const double z = (m->observations[t - 1] - x) / m->tau;
        return -0.5 * z * z;
    };
    spec.exact_mean = [m](std::size_t t, const Functional<double>& f) -> std::optional<Estimate> {
        // Only the identity functional has a closed-form oracle.
        if (f.name != "x" || f.arity != 1) return std::nullopt;
        LinearGaussianSSM prefix = *m;
        prefix.observations.resize(t);
        return Estimate{kalman_filter(prefix).back().mean};
    };
    return spec;
}

}  // namespace smc

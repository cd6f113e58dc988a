#include "smc/models/beta_bernoulli.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "smc/error.hpp"
#include "smc/resampling.hpp"

namespace smc {

namespace {

double log_beta_function(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double logistic(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

double BetaShape::log_density(double theta) const {
    if (!(theta > 0.0 && theta < 1.0)) return -std::numeric_limits<double>::infinity();
    return (a - 1.0) * std::log(theta) + (b - 1.0) * std::log1p(-theta) - log_beta_function(a, b);
}

void BetaBernoulliModel::validate() const {
    for (double s : {prior.a, prior.b, instrumental.a, instrumental.b}) {
        if (!(s > 0.0) || !std::isfinite(s)) throw Error("Beta shapes must be positive");
    }
    for (int y : observations) {
        if (y != 0 && y != 1) throw Error("Bernoulli observations must be 0 or 1");
    }
}

BetaShape beta_posterior(const BetaBernoulliModel& model, std::size_t t) {
    if (t > model.horizon()) throw Error("posterior beyond the observation horizon");
    double s = 0.0;
    for (std::size_t k = 0; k < t; ++k) s += model.observations[k];
    return {model.prior.a + s, model.prior.b + static_cast<double>(t) - s};
}

std::vector<int> simulate_bernoulli(double theta, std::size_t steps, RngStream& rng) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw Error("Bernoulli parameter outside [0, 1]");
    std::vector<int> out(steps);
    for (int& y : out) y = rng.bernoulli(theta) ? 1 : 0;
    return out;
}

ModelSpec<double> make_beta_bernoulli_model(const BetaBernoulliModel& model, bool resample_move) {
    model.validate();
    auto m = std::make_shared<const BetaBernoulliModel>(model);
    // Posterior shapes for every t, used by the oracle and the move kernel.
    auto shapes = std::make_shared<std::vector<BetaShape>>();
    shapes->push_back(model.prior);
    for (int y : model.observations) {
        BetaShape s = shapes->back();
        (y == 1 ? s.a : s.b) += 1.0;
        shapes->push_back(s);
    }

    ModelSpec<double> spec;
    spec.name = resample_move ? "beta_bernoulli_move" : "beta_bernoulli";
    spec.horizon = model.horizon();
    spec.kernel_is_invariant = resample_move;
    spec.sample_initial = [m](RngStream& rng) { return rng.beta(m->instrumental.a, m->instrumental.b); };
    if (resample_move) {
        spec.kernel_for_step = [shapes](std::size_t t, std::span<const double> cloud) -> MutationKernel<double> {
            std::vector<double> z(cloud.size());
            for (std::size_t j = 0; j < cloud.size(); ++j) z[j] = logit(cloud[j]);
            const double sd = std::sqrt(sample_variance(z));
            const double step = sd > 0.0 ? 2.4 * sd : 0.1;
            const BetaShape target = (*shapes)[t - 1];
            return [target, step](const double& theta, RngStream& rng) {
                // Density of z = logit(theta) is proportional to theta^a (1 - theta)^b.
                auto log_target = [&](double p) { return target.a * std::log(p) + target.b * std::log1p(-p); };
                const double proposal = logistic(logit(theta) + step * rng.normal());
                if (!(proposal > 0.0 && proposal < 1.0)) return theta;
                const double log_ratio = log_target(proposal) - log_target(theta);
                return std::log(rng.uniform_open()) < log_ratio ? proposal : theta;
            };
        };
    } else {
        spec.kernel_for_step = [](std::size_t, std::span<const double>) -> MutationKernel<double> {
            return [](const double& theta, RngStream&) { return theta; };
        };
    }
    spec.log_weight = [m](std::size_t t, const double& theta, const double*) {
        if (t == 0) return m->prior.log_density(theta) - m->instrumental.log_density(theta);
        return m->observations[t - 1] == 1 ? std::log(theta) : std::log1p(-theta);
    };
    spec.exact_mean = [shapes](std::size_t t, const Functional<double>& f) -> std::optional<Estimate> {
        const BetaShape s = (*shapes)[t];
        if (f.name == "theta" && f.arity == 1) return Estimate{s.mean()};
        boost::math::quadrature::tanh_sinh<double> integrator;
        Estimate out(f.arity);
        std::vector<double> value(f.arity);
        for (std::size_t c = 0; c < f.arity; ++c) {
            out[c] = integrator.integrate(
                [&](double theta) {
                    f.evaluate(theta, value);
                    return value[c] * std::exp(s.log_density(theta));
                },
                0.0, 1.0);
        }
        return out;
    };
    return spec;
}

bool has_integral_weight(const BetaBernoulliModel& model, double theta) {
    const double v0 = std::exp(model.prior.log_density(theta) - model.instrumental.log_density(theta));
    if (fractional_part(v0) == 0.0) return true;
    BetaShape s = model.prior;
    for (int y : model.observations) {
        const double v = y == 1 ? theta / s.mean() : (1.0 - theta) / (1.0 - s.mean());
        if (fractional_part(v) == 0.0) return true;
        (y == 1 ? s.a : s.b) += 1.0;
    }
    return false;
}

BetaBernoulliModel default_beta_bernoulli(std::size_t steps, double theta_true, std::uint64_t seed) {
    BetaBernoulliModel model;
    for (std::uint64_t s = seed;; ++s) {
        RngStream rng(s, 0);
        model.observations = simulate_bernoulli(theta_true, steps, rng);
        if (!has_integral_weight(model, theta_true)) break;
    }
    model.validate();
    return model;
}

}  // namespace smc

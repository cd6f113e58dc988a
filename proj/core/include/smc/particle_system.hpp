#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smc/error.hpp"
#include "smc/summation.hpp"

namespace smc {

using Estimate = std::vector<double>;

/// A real-valued (vector) function of a particle.
template <typename State>
struct Functional {
    std::string name;
    std::size_t arity = 1;
    std::function<void(const State&, std::span<double>)> evaluate;
    /// Declared sup |phi(x) - phi(x')|; may be +inf, absent when unknown.
    std::optional<double> variation;
    /// True when the value reads the integrated-out coordinate of a joint state.
    bool uses_conditional = false;
};

template <typename State, typename F>
Functional<State> scalar_functional(std::string name, F&& f,
                                    std::optional<double> variation = std::nullopt) {
    Functional<State> out;
    out.name = std::move(name);
    out.arity = 1;
    out.evaluate = [g = std::forward<F>(f)](const State& s, std::span<double> v) { v[0] = g(s); };
    out.variation = variation;
    return out;
}

template <typename State>
Functional<State> constant_functional(double c) {
    return scalar_functional<State>("constant", [c](const State&) { return c; }, 0.0);
}

/// Weighted particle population at one time index. Weights are stored as
/// unnormalized logarithms; a weight of zero is -inf.
template <typename State>
struct ParticleSystem {
    std::vector<State> particles;
    std::vector<double> log_weights;
    std::size_t time = 0;

    std::size_t size() const { return particles.size(); }

    static ParticleSystem from_weights(std::vector<State> particles, std::span<const double> weights,
                                       std::size_t time = 0) {
        if (particles.size() != weights.size()) throw Error("particle and weight counts differ");
        ParticleSystem out;
        out.particles = std::move(particles);
        out.time = time;
        out.log_weights.reserve(weights.size());
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw Error("weights must be finite and nonnegative");
            out.log_weights.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
        }
        out.validate();
        return out;
    }

    static ParticleSystem unit_weights(std::vector<State> particles, std::size_t time = 0) {
        ParticleSystem out;
        out.log_weights.assign(particles.size(), 0.0);
        out.particles = std::move(particles);
        out.time = time;
        return out;
    }

    /// Weights rescaled so the largest equals one.
    std::vector<double> weights() const;

    void validate() const;
};

namespace detail {

inline double max_log_weight(std::span<const double> log_weights) {
    double lmax = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) {
        if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
            throw Error("non-finite weight");
        }
        lmax = std::max(lmax, lw);
    }
    if (lmax == -std::numeric_limits<double>::infinity()) throw Error("degenerate weights");
    return lmax;
}

template <typename State>
void evaluate_checked(const Functional<State>& f, const State& s, std::span<double> out) {
    f.evaluate(s, out);
    for (double v : out) {
        if (!std::isfinite(v)) throw Error("non-finite functional: " + f.name);
    }
}

}  // namespace detail

template <typename State>
std::vector<double> ParticleSystem<State>::weights() const {
    const double lmax = detail::max_log_weight(log_weights);
    std::vector<double> w(log_weights.size());
    std::transform(log_weights.begin(), log_weights.end(), w.begin(),
                   [lmax](double lw) { return std::exp(lw - lmax); });
    return w;
}

template <typename State>
void ParticleSystem<State>::validate() const {
    if (particles.empty()) throw Error("particle system is empty");
    if (particles.size() != log_weights.size()) throw Error("particle and weight counts differ");
    detail::max_log_weight(log_weights);
}

/// Normalized weights rho_j = w_j / sum w.
inline std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
    const double lmax = detail::max_log_weight(log_weights);
    std::vector<double> rho(log_weights.size());
    CompensatedSum total;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        rho[j] = std::exp(log_weights[j] - lmax);
        total.add(rho[j]);
    }
    const double s = total.value();
    for (double& r : rho) r /= s;
    return rho;
}

template <typename State>
std::vector<double> normalize_weights(const ParticleSystem<State>& system) {
    if (system.particles.size() != system.log_weights.size()) {
        throw Error("particle and weight counts differ");
    }
    return normalize_log_weights(system.log_weights);
}

/// 1 / sum rho_j^2.
inline double effective_sample_size(std::span<const double> rho) {
    CompensatedSum acc;
    for (double r : rho) acc.add(r * r);
    return 1.0 / acc.value();
}

/// Self-normalized estimate sum w phi / sum w. Accumulated relative to the first
/// particle's value, so uniform weights reproduce the unweighted mean bit for bit
/// and a constant functional returns the constant exactly.
template <typename State>
Estimate weighted_estimate(std::span<const State> particles, std::span<const double> log_weights,
                           const Functional<State>& f) {
    if (particles.empty()) throw Error("particle system is empty");
    if (particles.size() != log_weights.size()) throw Error("particle and weight counts differ");
    const double lmax = detail::max_log_weight(log_weights);
    const std::size_t d = f.arity;
    std::vector<double> ref(d), value(d);
    detail::evaluate_checked(f, particles[0], ref);
    std::vector<CompensatedSum> num(d);
    CompensatedSum den;
    for (std::size_t j = 0; j < particles.size(); ++j) {
        const double w = std::exp(log_weights[j] - lmax);
        detail::evaluate_checked(f, particles[j], value);
        den.add(w);
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) num[c].add(w * (value[c] - ref[c]));
    }
    Estimate out(d);
    const double total = den.value();
    for (std::size_t c = 0; c < d; ++c) out[c] = ref[c] + num[c].value() / total;
    return out;
}

template <typename State>
Estimate weighted_estimate(const ParticleSystem<State>& system, const Functional<State>& f) {
    return weighted_estimate<State>(system.particles, system.log_weights, f);
}

/// Plain average H^{-1} sum phi; weights are ignored.
template <typename State>
Estimate unweighted_estimate(std::span<const State> particles, const Functional<State>& f) {
    if (particles.empty()) throw Error("particle system is empty");
    const std::size_t d = f.arity;
    std::vector<double> ref(d), value(d);
    detail::evaluate_checked(f, particles[0], ref);
    std::vector<CompensatedSum> num(d);
    for (const State& p : particles) {
        detail::evaluate_checked(f, p, value);
        for (std::size_t c = 0; c < d; ++c) num[c].add(value[c] - ref[c]);
    }
    Estimate out(d);
    const double h = static_cast<double>(particles.size());
    for (std::size_t c = 0; c < d; ++c) out[c] = ref[c] + num[c].value() / h;
    return out;
}

template <typename State>
Estimate unweighted_estimate(const ParticleSystem<State>& system, const Functional<State>& f) {
    return unweighted_estimate<State>(system.particles, f);
}

}  // namespace smc

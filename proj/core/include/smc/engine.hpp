#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smc/error.hpp"
#include "smc/parallel.hpp"
#include "smc/particle_system.hpp"
#include "smc/resampling.hpp"
#include "smc/rng.hpp"
#include "smc/summation.hpp"

namespace smc {

template <typename State>
using MutationKernel = std::function<State(const State& parent, RngStream& rng)>;

/// A target sequence described by its proposal mechanics.
///
/// Step 0 draws from the instrumental law; step t > 0 moves every particle with
/// the kernel returned by `kernel_for_step(t, cloud)`, where `cloud` is the
/// population the kernel is applied to (adaptive kernels may read it). The
/// log weight of a proposed point is log v_t up to an additive constant.
template <typename State>
struct ModelSpec {
    std::string name;
    std::function<State(RngStream&)> sample_initial;
    std::function<MutationKernel<State>(std::size_t t, std::span<const State> cloud)> kernel_for_step;
    /// parent is null at t = 0.
    std::function<double(std::size_t t, const State& proposed, const State* parent)> log_weight;
    /// The kernel leaves the previous target invariant (resample-move).
    bool kernel_is_invariant = false;
    /// Exact E_{pi_t}(phi) when the model has an oracle for this functional.
    std::function<std::optional<Estimate>(std::size_t t, const Functional<State>&)> exact_mean;
    /// Number of steps with data; filters may run for at most this many steps.
    std::size_t horizon = 0;
};

enum class SelectionSchedule { every_step, never, explicit_times };

template <typename State>
struct TimedFunctional {
    Functional<State> functional;
    /// Steps at which to evaluate; empty means every step.
    std::vector<std::size_t> times;

    bool active_at(std::size_t t) const {
        return times.empty() || std::find(times.begin(), times.end(), t) != times.end();
    }
};

template <typename State>
struct FilterConfig {
    std::size_t particles = 1000;
    std::size_t steps = 0;
    SelectionScheme scheme = SelectionScheme::multinomial;
    SelectionSchedule schedule = SelectionSchedule::every_step;
    std::vector<std::size_t> selection_times;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::vector<TimedFunctional<State>> functionals;

    void validate() const {
        if (particles == 0) throw Error("filter needs at least one particle");
        if (schedule == SelectionSchedule::never && scheme != SelectionScheme::none) {
            throw Error("selection schedule 'never' requires scheme 'none'");
        }
        if (schedule != SelectionSchedule::never && scheme == SelectionScheme::none) {
            throw Error("scheme 'none' requires selection schedule 'never'");
        }
        for (std::size_t t : selection_times) {
            if (t > steps) throw Error("selection time " + std::to_string(t) + " beyond T");
        }
        for (const auto& f : functionals) {
            if (!f.functional.evaluate || f.functional.arity == 0) {
                throw Error("functional '" + f.functional.name + "' is not defined");
            }
        }
    }

    bool selects_at(std::size_t t) const {
        switch (schedule) {
            case SelectionSchedule::every_step: return true;
            case SelectionSchedule::never: return false;
            case SelectionSchedule::explicit_times:
                return std::find(selection_times.begin(), selection_times.end(), t) != selection_times.end();
        }
        return false;
    }
};

struct StepRecord {
    std::size_t t = 0;
    /// Pre-selection self-normalized estimates, one per functional (empty when
    /// the functional is not evaluated at t).
    std::vector<Estimate> weighted;
    /// Post-selection plain averages; present only when selection occurred.
    std::optional<std::vector<Estimate>> unweighted;
    double ess = 0.0;
    double log_mean_weight = 0.0;
    double max_normalized_weight = 0.0;
};

struct FilterTrace {
    std::vector<StepRecord> steps;
};

namespace detail {

inline double log_mean_exp(std::span<const double> log_weights) {
    double lmax = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) lmax = std::max(lmax, lw);
    CompensatedSum acc;
    for (double lw : log_weights) acc.add(std::exp(lw - lmax));
    return lmax + std::log(acc.value() / static_cast<double>(log_weights.size()));
}

inline void check_step_weights(std::span<const double> log_weights, std::size_t t) {
    bool any = false;
    for (double lw : log_weights) {
        if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
            throw Error("non-finite weight at t=" + std::to_string(t));
        }
        any = any || lw > -std::numeric_limits<double>::infinity();
    }
    if (!any) throw WeightCollapse(t);
}

template <typename State>
void record_estimates(const FilterConfig<State>& config, const ParticleSystem<State>& system, StepRecord& rec,
                      bool weighted) {
    std::vector<Estimate> out(config.functionals.size());
    for (std::size_t i = 0; i < config.functionals.size(); ++i) {
        const auto& tf = config.functionals[i];
        if (!tf.active_at(rec.t)) continue;
        out[i] = weighted ? weighted_estimate(system, tf.functional) : unweighted_estimate(system, tf.functional);
    }
    if (weighted) {
        rec.weighted = std::move(out);
    } else {
        rec.unweighted = std::move(out);
    }
}

}  // namespace detail

/// Mutation, correction and selection for t = 0..T.
///
/// Weights are carried multiplicatively across steps where no selection is
/// scheduled. Every step records the pre-selection estimate; steps with
/// selection also record the post-selection average.
template <typename State>
FilterTrace run_filter(const ModelSpec<State>& model, const FilterConfig<State>& config) {
    config.validate();
    if (model.horizon < config.steps) {
        throw Error("model '" + model.name + "' has data for " + std::to_string(model.horizon) + " steps, " +
                    std::to_string(config.steps) + " requested");
    }
    RngStream rng(config.seed, config.stream);
    const std::size_t h = config.particles;

    ParticleSystem<State> system;
    system.particles.reserve(h);
    for (std::size_t j = 0; j < h; ++j) system.particles.push_back(model.sample_initial(rng));
    system.log_weights.resize(h);
    for (std::size_t j = 0; j < h; ++j) system.log_weights[j] = model.log_weight(0, system.particles[j], nullptr);

    FilterTrace trace;
    trace.steps.reserve(config.steps + 1);
    std::vector<State> moved;
    for (std::size_t t = 0;; ++t) {
        system.time = t;
        if (t > 0) {
            const MutationKernel<State> kernel = model.kernel_for_step(t, system.particles);
            moved.clear();
            moved.reserve(h);
            for (std::size_t j = 0; j < h; ++j) moved.push_back(kernel(system.particles[j], rng));
            for (std::size_t j = 0; j < h; ++j) {
                system.log_weights[j] += model.log_weight(t, moved[j], &system.particles[j]);
            }
            std::swap(system.particles, moved);
        }
        detail::check_step_weights(system.log_weights, t);

        StepRecord rec;
        rec.t = t;
        const std::vector<double> rho = normalize_log_weights(system.log_weights);
        rec.ess = effective_sample_size(rho);
        rec.max_normalized_weight = *std::max_element(rho.begin(), rho.end());
        rec.log_mean_weight = detail::log_mean_exp(system.log_weights);
        detail::record_estimates(config, system, rec, true);

        if (config.selects_at(t)) {
            const SelectionCounts counts = selection_counts(config.scheme, rho, h, rng);
            system = apply_selection(system, counts);
            system.time = t;
            detail::record_estimates(config, system, rec, false);
        }
        trace.steps.push_back(std::move(rec));
        if (t == config.steps) break;
    }
    return trace;
}

/// Sequential importance sampling: cumulative weights, no selection.
template <typename State>
FilterTrace run_sis(const ModelSpec<State>& model, const FilterConfig<State>& config) {
    if (config.schedule != SelectionSchedule::never || config.scheme != SelectionScheme::none) {
        throw Error("run_sis requires schedule 'never' and scheme 'none'");
    }
    return run_filter(model, config);
}

/// Evidence that a joint model and a marginal model satisfy the kernel
/// compatibility condition needed to compare them; produced by model builders
/// that construct the joint kernel in factorized form.
template <typename Joint, typename Marginal>
struct MarginalPairing {
    std::function<Joint(const Marginal&)> embed;
    bool kernels_compatible = false;
};

struct MarginalPairTraces {
    FilterTrace joint;
    FilterTrace marginal;
};

/// Runs the joint filter and the marginalized filter on independent streams
/// (stream and stream + 1) with the same H, T and scheme. Functionals are given
/// on the joint state and must not read the integrated-out coordinate.
template <typename Joint, typename Marginal>
MarginalPairTraces run_marginal_pair(const ModelSpec<Joint>& joint, const ModelSpec<Marginal>& marginal,
                                     const MarginalPairing<Joint, Marginal>& pairing,
                                     const FilterConfig<Joint>& config) {
    if (!pairing.kernels_compatible || !pairing.embed) {
        throw Error("joint and marginal models are not declared kernel-compatible");
    }
    FilterConfig<Marginal> mconfig;
    mconfig.particles = config.particles;
    mconfig.steps = config.steps;
    mconfig.scheme = config.scheme;
    mconfig.schedule = config.schedule;
    mconfig.selection_times = config.selection_times;
    mconfig.seed = config.seed;
    mconfig.stream = config.stream + 1;
    for (const auto& tf : config.functionals) {
        if (tf.functional.uses_conditional) {
            throw Error("functional '" + tf.functional.name + "' depends on the integrated-out coordinate");
        }
        TimedFunctional<Marginal> m;
        m.times = tf.times;
        m.functional.name = tf.functional.name;
        m.functional.arity = tf.functional.arity;
        m.functional.variation = tf.functional.variation;
        m.functional.evaluate = [f = tf.functional.evaluate, embed = pairing.embed](const Marginal& s,
                                                                                   std::span<double> out) {
            f(embed(s), out);
        };
        mconfig.functionals.push_back(std::move(m));
    }
    MarginalPairTraces out;
    out.joint = run_filter(joint, config);
    out.marginal = run_filter(marginal, mconfig);
    return out;
}

/// Summary of k independent filters.
struct ReplicateSummary {
    std::size_t replicates = 0;
    std::vector<FilterTrace> traces;
    /// [functional][replicate]: pre-selection estimate at the final step.
    std::vector<std::vector<Estimate>> final_estimates;
    /// [functional]: average of the k final estimates.
    std::vector<Estimate> pooled_mean;
    /// [functional]: per-coordinate unbiased variance of the k final estimates.
    std::vector<Estimate> empirical_variance;
    /// [step][functional]: per-coordinate variance of the pre-selection estimates.
    std::vector<std::vector<Estimate>> step_variance;
};

namespace detail {

inline Estimate coordinate_variance(const std::vector<Estimate>& values) {
    if (values.empty() || values.front().empty()) return {};
    const std::size_t d = values.front().size();
    Estimate out(d);
    std::vector<double> column(values.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r = 0; r < values.size(); ++r) column[r] = values[r][c];
        out[c] = sample_variance(column);
    }
    return out;
}

inline Estimate coordinate_mean(const std::vector<Estimate>& values) {
    if (values.empty() || values.front().empty()) return {};
    const std::size_t d = values.front().size();
    Estimate out(d);
    std::vector<double> column(values.size());
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r = 0; r < values.size(); ++r) column[r] = values[r][c];
        out[c] = shifted_mean(column);
    }
    return out;
}

}  // namespace detail

inline ReplicateSummary summarize_replicates(std::vector<FilterTrace> traces) {
    ReplicateSummary out;
    out.replicates = traces.size();
    if (traces.empty()) return out;
    const std::size_t nf = traces.front().steps.back().weighted.size();
    const std::size_t nsteps = traces.front().steps.size();
    out.final_estimates.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        for (const auto& tr : traces) out.final_estimates[f].push_back(tr.steps.back().weighted[f]);
        out.pooled_mean.push_back(detail::coordinate_mean(out.final_estimates[f]));
        out.empirical_variance.push_back(detail::coordinate_variance(out.final_estimates[f]));
    }
    out.step_variance.resize(nsteps);
    for (std::size_t s = 0; s < nsteps; ++s) {
        for (std::size_t f = 0; f < nf; ++f) {
            std::vector<Estimate> values;
            for (const auto& tr : traces) {
                if (!tr.steps[s].weighted[f].empty()) values.push_back(tr.steps[s].weighted[f]);
            }
            out.step_variance[s].push_back(detail::coordinate_variance(values));
        }
    }
    out.traces = std::move(traces);
    return out;
}

/// k independent filters on streams 0..k-1 of `base_seed`, run concurrently.
template <typename State>
ReplicateSummary run_replicates(const ModelSpec<State>& model, const FilterConfig<State>& config, std::size_t k,
                                std::uint64_t base_seed, std::optional<std::size_t> threads = std::nullopt) {
    if (k < 2) throw Error("replicate runs need k >= 2");
    for (const auto& tf : config.functionals) {
        if (!tf.active_at(config.steps)) {
            throw Error("functional '" + tf.functional.name + "' is not evaluated at the final step");
        }
    }
    std::vector<FilterTrace> traces(k);
    parallel_for(k, resolve_threads(threads), [&](std::size_t r) {
        FilterConfig<State> c = config;
        c.seed = base_seed;
        c.stream = r;
        try {
            traces[r] = run_filter(model, c);
        } catch (const std::exception& e) {
            throw ReplicateError(r, e.what());
        }
    });
    return summarize_replicates(std::move(traces));
}

}  // namespace smc

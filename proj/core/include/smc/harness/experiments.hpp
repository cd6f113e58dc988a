#pragma once

#include <cstddef>
#include <optional>

#include "smc/harness/config.hpp"
#include "smc/harness/output.hpp"

namespace smc::harness {

/// Replicated filter runs with pooled estimates against the model oracle.
ExperimentResult run_filters(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

/// M independent filters on a finite HMM; empirical variance of sqrt(H) times
/// the error against the exact asymptotic variance, plus normality diagnostics.
ExperimentResult clt_check(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

/// Log-log slopes of the fixed-parameter variances of the Beta-Bernoulli model.
ExperimentResult rate_fit(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

/// Exact filtering variance against the contraction bound, plateau and
/// smoothing diagnostics.
ExperimentResult stability(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

/// Multinomial versus residual selection: exact variances, gap, and optional
/// replicate variances.
ExperimentResult compare_schemes(const ExperimentConfig& config,
                                 std::optional<std::size_t> threads = std::nullopt);

/// Joint versus marginalized filter on a marginal pair model.
ExperimentResult rb_compare(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

/// Growth of the log weight ratio of two independent SIS particles.
ExperimentResult weight_degeneracy(const ExperimentConfig& config,
                                   std::optional<std::size_t> threads = std::nullopt);

/// Dispatch on config.experiment.
ExperimentResult run_experiment(const ExperimentConfig& config, std::optional<std::size_t> threads = std::nullopt);

}  // namespace smc::harness

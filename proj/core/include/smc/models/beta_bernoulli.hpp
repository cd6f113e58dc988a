#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "smc/engine.hpp"
#include "smc/rng.hpp"

namespace smc {

struct BetaShape {
    double a = 1.0;
    double b = 1.0;

    double mean() const { return a / (a + b); }
    double variance() const { return a * b / ((a + b) * (a + b) * (a + b + 1.0)); }
    double log_density(double theta) const;
};

/// theta ~ Beta(prior), y_k | theta ~ Bernoulli(theta). The sampler starts from
/// the instrumental Beta law and never moves theta except through resample-move.
struct BetaBernoulliModel {
    BetaShape prior{2.0, 2.0};
    BetaShape instrumental{1.0, 1.0};
    std::vector<int> observations;  ///< y_1..y_T stored at index t-1

    std::size_t horizon() const { return observations.size(); }
    void validate() const;
};

/// Posterior after t observations: (a + s_t, b + t - s_t).
BetaShape beta_posterior(const BetaBernoulliModel& model, std::size_t t);

std::vector<int> simulate_bernoulli(double theta, std::size_t steps, RngStream& rng);

/// Identity kernel (SIS / SIR for a fixed parameter), or, with `resample_move`,
/// a random-walk Metropolis-Hastings kernel on logit(theta) that leaves the
/// previous posterior invariant; its step is 2.4 times the cloud's sd of logit(theta).
ModelSpec<double> make_beta_bernoulli_model(const BetaBernoulliModel& model, bool resample_move = false);

/// The default instance: prior Beta(2, 2), instrumental Beta(1, 1), data from
/// theta_true. Data are regenerated with seed + 1, seed + 2, ... until
/// v_t(theta_true) is non-integral at every step.
BetaBernoulliModel default_beta_bernoulli(std::size_t steps, double theta_true, std::uint64_t seed);

/// True when pi_t(theta)/pi_{t-1}(theta) is an integer (within 1e-12 relative) at some t.
bool has_integral_weight(const BetaBernoulliModel& model, double theta);

}  // namespace smc

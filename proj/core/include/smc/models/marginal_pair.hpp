#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "smc/engine.hpp"

namespace smc {

/// Finite joint model on (xi, lambda) whose lambda coordinate can be integrated
/// out analytically.
///
/// The joint kernel is fixed to k((xi, lambda), (xi', lambda')) =
/// k^m(xi, xi') * pc(lambda' | xi'), with pc the conditional proposal, and the
/// initial proposal is pm_0(xi) pc(lambda | xi). Targets are pi_t proportional
/// to (proposal at t) * L_t(xi, lambda). Under this construction the marginal
/// filter on xi (kernel k^m, weight sum_lambda pc L_t) targets the xi-marginal
/// of pi_t exactly.
struct MarginalPairModel {
    Eigen::VectorXd initial_marginal;       ///< pm_0, size n_xi
    Eigen::MatrixXd marginal_kernel;        ///< k^m, n_xi x n_xi
    Eigen::MatrixXd conditional_proposal;   ///< pc(lambda | xi), n_xi x n_lambda
    std::vector<Eigen::MatrixXd> likelihoods;  ///< L_t, t = 0..T, each n_xi x n_lambda

    std::size_t xi_states() const { return static_cast<std::size_t>(initial_marginal.size()); }
    std::size_t lambda_states() const { return static_cast<std::size_t>(conditional_proposal.cols()); }
    std::size_t horizon() const { return likelihoods.empty() ? 0 : likelihoods.size() - 1; }
    void validate() const;

    /// Marginal weight up to a constant: sum_lambda pc(lambda | xi) L_t(xi, lambda).
    Eigen::VectorXd marginal_weight(std::size_t t) const;
    /// v^c(lambda | xi) = L_t / sum_lambda pc L_t; zero rows where the sum vanishes.
    Eigen::MatrixXd conditional_weight(std::size_t t) const;
    /// True when the conditional target equals the conditional proposal at t.
    bool conditional_is_exact(std::size_t t) const;
};

/// Exact joint targets pi_t(xi, lambda), t = 0..T.
std::vector<Eigen::MatrixXd> pair_joint_targets(const MarginalPairModel& model);

struct PairState {
    int xi = 0;
    int lambda = -1;  ///< -1 marks an embedded marginal state
    bool operator==(const PairState&) const = default;
};

ModelSpec<PairState> make_pair_joint_model(const MarginalPairModel& model);
ModelSpec<int> make_pair_marginal_model(const MarginalPairModel& model);
MarginalPairing<PairState, int> pair_embedding();

/// Random instance with n_xi = 3, n_lambda = 2. With `conditional_exact` the
/// likelihood ignores lambda.
MarginalPairModel example_marginal_pair(bool conditional_exact, std::size_t steps, std::uint64_t seed);

}  // namespace smc

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "smc/models/finite_hmm.hpp"
#include "smc/models/marginal_pair.hpp"

namespace smc {

/// A sequence of targets on finite state sets linked by Markov kernels.
///
/// pi~_0 is given; for t >= 1, pi~_t = pi_{t-1} K_t and v_t = pi_t / pi~_t
/// (zero where pi~_t vanishes). Every variance quantity is a finite sum over
/// these tables.
struct FiniteFlow {
    Eigen::VectorXd initial_proposal;       ///< pi~_0
    std::vector<Eigen::VectorXd> targets;   ///< pi_t, t = 0..T
    std::vector<Eigen::MatrixXd> kernels;   ///< K_t (n_{t-1} x n_t) at index t; index 0 unused
    /// coordinates[t][i]: the values carried by state i at time t. For HMM
    /// flows this is a path x_0..x_t with -1 at positions the state forgets.
    std::vector<std::vector<std::vector<int>>> coordinates;

    std::size_t steps() const { return targets.empty() ? 0 : targets.size() - 1; }
    Eigen::Index size(std::size_t t) const { return targets.at(t).size(); }
    Eigen::VectorXd proposal(std::size_t t) const;
    Eigen::VectorXd weight(std::size_t t) const;

    /// Checks shapes, stochasticity, and absolute continuity of pi_t w.r.t. pi~_t.
    void validate() const;
};

/// Filtering flow: state (x_{t-1}, x_t) for t >= 1, x_0 at t = 0.
FiniteFlow hmm_filtering_flow(const FiniteHMM& model, std::size_t steps);

/// Flow that also carries x_anchor: state (x_anchor, x_{t-1}, x_t) for t > anchor.
FiniteFlow hmm_anchored_flow(const FiniteHMM& model, std::size_t steps, std::size_t anchor);

/// Full path space X^{t+1}; exponential size, for brute-force checks only.
FiniteFlow hmm_path_flow(const FiniteHMM& model, std::size_t steps);

/// Joint (xi, lambda) flow of a marginal pair; state index xi * n_lambda + lambda.
FiniteFlow pair_joint_flow(const MarginalPairModel& model);

/// Marginal flow on xi.
FiniteFlow pair_marginal_flow(const MarginalPairModel& model);

using CoordinateFunction = std::function<void(std::span<const int>, std::span<double>)>;

/// n_t x d table of a function of the state coordinates.
Eigen::MatrixXd tabulate(const FiniteFlow& flow, std::size_t t, const CoordinateFunction& f, std::size_t d);

/// n_t x d table of phi(x_k) for an HMM flow, phi given as an m x d table.
Eigen::MatrixXd tabulate_position(const FiniteFlow& flow, std::size_t t, std::size_t k, const Eigen::MatrixXd& phi);

}  // namespace smc

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "smc/engine.hpp"
#include "smc/rng.hpp"

namespace smc {

/// Finite-state hidden Markov model.
///
/// x_0 ~ initial is unobserved; for t = 1..T, x_t ~ g(.|x_{t-1}) and
/// y_t ~ f(.|x_t). Particles propose x_t from q(.|x_{t-1}).
struct FiniteHMM {
    Eigen::VectorXd initial;      ///< m
    Eigen::MatrixXd transition;   ///< g, m x m, row = previous state
    Eigen::MatrixXd emission;     ///< f, m x (alphabet size), row = state
    Eigen::MatrixXd proposal;     ///< q, m x m; equal to g for the bootstrap filter
    std::vector<int> observations;  ///< y_1..y_T stored at index t-1

    std::size_t states() const { return static_cast<std::size_t>(initial.size()); }
    std::size_t horizon() const { return observations.size(); }
    int observation(std::size_t t) const { return observations.at(t - 1); }

    /// Throws on malformed tables.
    void validate() const;

    /// Bootstrap model (q = g).
    static FiniteHMM bootstrap(Eigen::VectorXd initial, Eigen::MatrixXd transition, Eigen::MatrixXd emission,
                               std::vector<int> observations);
};

/// Exact filtering quantities up to step T.
struct ForwardPass {
    std::vector<Eigen::VectorXd> filter;     ///< pi_t(x_t), t = 0..T
    std::vector<Eigen::VectorXd> predictive; ///< pi_{t-1} g, t = 1..T at index t (index 0 = initial)
    std::vector<double> normalizers;         ///< c_t = p(y_t | y_{1:t-1}), index t (c_0 = 1)
};

ForwardPass finite_hmm_forward(const FiniteHMM& model, std::size_t steps);

/// Exact transition kernels of the posterior path law under pi_t:
/// result[k](a, b) = pi_t(x_{k+1} = b | x_k = a) for k = 0..t-1.
std::vector<Eigen::MatrixXd> posterior_kernels(const FiniteHMM& model, std::size_t t);

/// pi_t(x_t | x_k) as an m x m table (rows indexed by x_k).
Eigen::MatrixXd posterior_conditional(const FiniteHMM& model, std::size_t t, std::size_t k);

/// Marginal of x_k under pi_t (smoothing distribution).
Eigen::VectorXd smoothing_marginal(const FiniteHMM& model, std::size_t t, std::size_t k);

/// Joint law of (x_1, x_t) under pi_t for t >= 1; for t = 0 the diagonal of pi_0.
Eigen::MatrixXd first_current_joint(const FiniteHMM& model, std::size_t t);

/// Weight v_t(a, b) = g(b|a) f(y_t|b) / (q(b|a) c_t), normalized so that
/// E_{pi_{t-1} q} v_t = 1; zero where q vanishes.
Eigen::MatrixXd hmm_weight_table(const FiniteHMM& model, const ForwardPass& pass, std::size_t t);

struct HmmSample {
    std::vector<int> states;        ///< x_0..x_T
    std::vector<int> observations;  ///< y_1..y_T
};

/// Draws a path and its observations from the model's joint law (the
/// observation field of `model` is ignored).
HmmSample simulate_hmm(const FiniteHMM& model, std::size_t steps, RngStream& rng);

/// Particle of the reduced state-space filter: the current state and the state
/// at t = 1 (equal to the current state for t <= 1).
struct HmmParticle {
    int first = 0;
    int current = 0;
    bool operator==(const HmmParticle&) const = default;
};

ModelSpec<HmmParticle> make_hmm_model(const FiniteHMM& model);

/// Full-path particle for brute-force comparisons; paths[t] = x_t.
ModelSpec<std::vector<int>> make_hmm_path_model(const FiniteHMM& model);

/// Row-ratio and emission bounds of the stability conditions, computed by
/// exhaustive search over the tables.
struct HmmBounds {
    double kernel_ratio = 1.0;  ///< max over g and q of sup_x k(x|a)/k(x|b)
    double emission_low = 0.0;  ///< min_{y,x} f(y|x)
    double emission_high = 0.0; ///< max_{y,x} f(y|x)
};

HmmBounds hmm_bounds(const FiniteHMM& model);

/// The two-state example instance with a fixed observation sequence of length T.
FiniteHMM two_state_hmm(std::size_t steps = 10);

/// The three-state instance with C = 3 and f_high / f_low = 2; observations are
/// simulated from the model with the given seed.
FiniteHMM three_state_stable_hmm(std::size_t steps, std::uint64_t seed);

}  // namespace smc

#pragma once

#include <cstddef>
#include <vector>

#include "smc/engine.hpp"
#include "smc/rng.hpp"

namespace smc {

/// x_0 ~ N(m_0, s_0^2); x_t = a x_{t-1} + sigma e_t; y_t = x_t + tau n_t for t >= 1.
struct LinearGaussianSSM {
    double a = 0.9;
    double sigma = 1.0;
    double tau = 1.0;
    double initial_mean = 0.0;
    double initial_sd = 1.0;
    std::vector<double> observations;  ///< y_1..y_T stored at index t-1

    std::size_t horizon() const { return observations.size(); }
    void validate() const;
};

struct KalmanStep {
    double mean = 0.0;
    double variance = 0.0;
};

/// Exact filtering moments for t = 0..T.
std::vector<KalmanStep> kalman_filter(const LinearGaussianSSM& model);

struct GaussianSample {
    std::vector<double> states;        ///< x_0..x_T
    std::vector<double> observations;  ///< y_1..y_T
};

GaussianSample simulate_gaussian(const LinearGaussianSSM& model, std::size_t steps, RngStream& rng);

/// Bootstrap filter: proposal is the state transition, weight the observation density.
ModelSpec<double> make_gaussian_model(const LinearGaussianSSM& model);

}  // namespace smc

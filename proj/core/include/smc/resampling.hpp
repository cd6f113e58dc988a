#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "smc/error.hpp"
#include "smc/particle_system.hpp"
#include "smc/rng.hpp"

namespace smc {

enum class SelectionScheme { multinomial, residual, systematic, none };

std::string_view to_string(SelectionScheme scheme);
SelectionScheme parse_scheme(std::string_view name);

/// Replicate counts n_j produced by one selection step.
struct SelectionCounts {
    std::vector<std::size_t> counts;
    std::size_t size = 0;            ///< H, the sum of the counts
    std::size_t residual_draws = 0;  ///< H^r; zero except for residual selection
};

/// Counts ~ Multinomial(H, rho), drawn by walking H sorted uniforms (O(H + n)).
SelectionCounts multinomial_counts(std::span<const double> rho, std::size_t size, RngStream& rng);

/// floor(H rho_j) deterministic copies plus H^r multinomial draws on the
/// fractional remainders.
SelectionCounts residual_counts(std::span<const double> rho, std::size_t size, RngStream& rng);

/// One uniform u; n_j counts the points (u + i) / H that fall in the j-th
/// cumulative-weight interval, intervals laid out in index order.
SelectionCounts systematic_counts(std::span<const double> rho, std::size_t size, RngStream& rng);

SelectionCounts selection_counts(SelectionScheme scheme, std::span<const double> rho, std::size_t size,
                                 RngStream& rng);

/// floor(x) that treats values within 1e-12 (relative) of an integer as that integer.
double snapped_floor(double x);

/// x minus its integer part, with the same snapping as snapped_floor.
inline double fractional_part(double x) { return x - snapped_floor(x); }

/// Particle j copied counts[j] times, in index order, all weights one.
template <typename State>
ParticleSystem<State> apply_selection(const ParticleSystem<State>& system, const SelectionCounts& counts) {
    if (counts.counts.size() != system.size()) throw Error("selection counts do not match particle count");
    std::size_t total = 0;
    for (std::size_t n : counts.counts) total += n;
    if (total != counts.size || total != system.size()) {
        throw Error("selection counts sum to " + std::to_string(total) + ", expected " +
                    std::to_string(system.size()));
    }
    ParticleSystem<State> out;
    out.time = system.time;
    out.particles.reserve(total);
    for (std::size_t j = 0; j < counts.counts.size(); ++j) {
        for (std::size_t c = 0; c < counts.counts[j]; ++c) out.particles.push_back(system.particles[j]);
    }
    out.log_weights.assign(total, 0.0);
    return out;
}

}  // namespace smc

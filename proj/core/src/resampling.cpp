#include "smc/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smc/summation.hpp"

namespace smc {

namespace {

constexpr double kNormalizationTolerance = 1e-9;

void check_inputs(std::span<const double> rho, std::size_t size) {
    if (size == 0) throw Error("selection size H must be positive");
    if (rho.empty()) throw Error("selection needs at least one weight");
    CompensatedSum total;
    for (double r : rho) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw Error("unnormalized weights: negative or non-finite entry");
        total.add(r);
    }
    if (std::abs(total.value() - 1.0) > kNormalizationTolerance) {
        throw Error("unnormalized weights: sum is " + std::to_string(total.value()));
    }
}

std::vector<double> cumulative(std::span<const double> rho) {
    std::vector<double> cum(rho.size());
    CompensatedSum acc;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        acc.add(rho[j]);
        cum[j] = acc.value();
    }
    return cum;
}

std::size_t last_positive(std::span<const double> rho) {
    std::size_t last = rho.size() - 1;
    while (last > 0 && rho[last] == 0.0) --last;
    return last;
}

// Multinomial counts over probabilities proportional to `mass` (any positive total).
void add_multinomial(std::span<const double> mass, std::size_t draws, RngStream& rng,
                     std::vector<std::size_t>& counts) {
    if (draws == 0) return;
    const std::vector<double> cum = cumulative(mass);
    const double total = cum.back();
    const std::size_t last = last_positive(mass);
    // Order statistics of `draws` uniforms from normalized exponential spacings.
    std::vector<double> spacings(draws + 1);
    for (double& e : spacings) e = rng.exponential();
    double partial = 0.0;
    double grand = 0.0;
    for (double e : spacings) grand += e;
    std::size_t j = 0;
    for (std::size_t k = 0; k < draws; ++k) {
        partial += spacings[k];
        const double u = partial / grand * total;
        while (j < last && u >= cum[j]) ++j;
        ++counts[j];
    }
}

}  // namespace

std::string_view to_string(SelectionScheme scheme) {
    switch (scheme) {
        case SelectionScheme::multinomial: return "multinomial";
        case SelectionScheme::residual: return "residual";
        case SelectionScheme::systematic: return "systematic";
        case SelectionScheme::none: return "none";
    }
    return "unknown";
}

SelectionScheme parse_scheme(std::string_view name) {
    if (name == "multinomial") return SelectionScheme::multinomial;
    if (name == "residual") return SelectionScheme::residual;
    if (name == "systematic") return SelectionScheme::systematic;
    if (name == "none") return SelectionScheme::none;
    throw Error("unknown selection scheme: " + std::string(name));
}

double snapped_floor(double x) {
    const double nearest = std::round(x);
    if (std::abs(x - nearest) <= 1e-12 * std::max(1.0, std::abs(x))) return nearest;
    return std::floor(x);
}

SelectionCounts multinomial_counts(std::span<const double> rho, std::size_t size, RngStream& rng) {
    check_inputs(rho, size);
    SelectionCounts out;
    out.size = size;
    out.counts.assign(rho.size(), 0);
    add_multinomial(rho, size, rng, out.counts);
    return out;
}

SelectionCounts residual_counts(std::span<const double> rho, std::size_t size, RngStream& rng) {
    check_inputs(rho, size);
    SelectionCounts out;
    out.size = size;
    out.counts.assign(rho.size(), 0);
    const double h = static_cast<double>(size);
    std::vector<double> remainder(rho.size());
    std::size_t deterministic = 0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        const double scaled = h * rho[j];
        const double whole = snapped_floor(scaled);
        out.counts[j] = static_cast<std::size_t>(whole);
        remainder[j] = std::max(0.0, scaled - whole);
        deterministic += out.counts[j];
    }
    if (deterministic > size) throw Error("residual selection: integer parts exceed H");
    out.residual_draws = size - deterministic;
    if (out.residual_draws > 0) {
        CompensatedSum mass;
        for (double r : remainder) mass.add(r);
        if (!(mass.value() > 0.0)) throw Error("residual selection: no fractional mass left");
        add_multinomial(remainder, out.residual_draws, rng, out.counts);
    }
    return out;
}

SelectionCounts systematic_counts(std::span<const double> rho, std::size_t size, RngStream& rng) {
    check_inputs(rho, size);
    SelectionCounts out;
    out.size = size;
    out.counts.assign(rho.size(), 0);
    std::vector<double> cum = cumulative(rho);
    const double h = static_cast<double>(size);
    const double u = rng.uniform();
    const std::size_t last = last_positive(rho);
    // Number of points (u + i) below H * c is ceil(H * c - u).
    auto points_below = [&](double c) {
        double scaled = h * c;
        const double nearest = std::round(scaled);
        if (std::abs(scaled - nearest) <= 1e-10 * std::max(1.0, scaled)) scaled = nearest;
        return static_cast<std::size_t>(std::max(0.0, std::ceil(scaled - u)));
    };
    std::size_t below_prev = 0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        const std::size_t below = j >= last ? size : std::min(size, points_below(cum[j]));
        out.counts[j] = below >= below_prev ? below - below_prev : 0;
        below_prev = std::max(below_prev, below);
        if (j >= last) break;
    }
    return out;
}

SelectionCounts selection_counts(SelectionScheme scheme, std::span<const double> rho, std::size_t size,
                                 RngStream& rng) {
    switch (scheme) {
        case SelectionScheme::multinomial: return multinomial_counts(rho, size, rng);
        case SelectionScheme::residual: return residual_counts(rho, size, rng);
        case SelectionScheme::systematic: return systematic_counts(rho, size, rng);
        case SelectionScheme::none: break;
    }
    throw Error("selection requested with scheme 'none'");
}

}  // namespace smc

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "smc/resampling.hpp"
#include "smc/rng.hpp"

namespace {

using smc::SelectionScheme;

std::vector<double> mean_counts(SelectionScheme s, const std::vector<double>& rho, std::size_t h, int trials,
                                std::uint64_t seed) {
    smc::RngStream rng(seed, 0);
    std::vector<double> sum(rho.size(), 0.0);
    for (int i = 0; i < trials; ++i) {
        const auto c = smc::selection_counts(s, rho, h, rng);
        for (std::size_t j = 0; j < rho.size(); ++j) sum[j] += static_cast<double>(c.counts[j]);
    }
    for (double& x : sum) x /= trials;
    return sum;
}

TEST(Multinomial, SingleAtom) {
    smc::RngStream rng(1, 0);
    for (int i = 0; i < 100; ++i) {
        const auto c = smc::multinomial_counts(std::vector<double>{1.0}, 5, rng);
        EXPECT_EQ(c.counts, std::vector<std::size_t>{5});
        EXPECT_EQ(c.residual_draws, 0u);
    }
}

TEST(Multinomial, MeanMatchesQuota) {
    const int n = 100000;
    const auto m = mean_counts(SelectionScheme::multinomial, {0.75, 0.25}, 4, n, 2);
    EXPECT_NEAR(m[0], 3.0, 3.0 * std::sqrt(4 * 0.75 * 0.25 / n));
}

TEST(Multinomial, ZeroProbabilityAtomNeverDrawn) {
    smc::RngStream rng(3, 0);
    for (int i = 0; i < 10000; ++i) {
        const auto c = smc::multinomial_counts(std::vector<double>{0.5, 0.5, 0.0}, 10, rng);
        EXPECT_EQ(c.counts[2], 0u);
        EXPECT_EQ(c.counts[0] + c.counts[1], 10u);
    }
    // trailing and interior zeros
    for (int i = 0; i < 10000; ++i) {
        const auto c = smc::multinomial_counts(std::vector<double>{0.0, 0.3, 0.0, 0.7, 0.0}, 7, rng);
        EXPECT_EQ(c.counts[0] + c.counts[2] + c.counts[4], 0u);
    }
}

TEST(Multinomial, Errors) {
    smc::RngStream rng(4, 0);
    EXPECT_THROW(smc::multinomial_counts(std::vector<double>{1.0}, 0, rng), smc::Error);
    EXPECT_THROW(smc::multinomial_counts(std::vector<double>{0.5, 0.6}, 3, rng), smc::Error);
    EXPECT_THROW(smc::multinomial_counts(std::vector<double>{}, 3, rng), smc::Error);
    EXPECT_THROW(smc::multinomial_counts(std::vector<double>{1.5, -0.5}, 3, rng), smc::Error);
}

TEST(Residual, IntegerQuotasAreDeterministic) {
    smc::RngStream rng(5, 0);
    const auto before = rng.position();
    const auto c = smc::residual_counts(std::vector<double>{0.5, 0.3, 0.2}, 10, rng);
    EXPECT_EQ(c.counts, (std::vector<std::size_t>{5, 3, 2}));
    EXPECT_EQ(c.residual_draws, 0u);
    EXPECT_EQ(rng.position(), before);
}

TEST(Residual, OneResidualDraw) {
    smc::RngStream rng(6, 0);
    int first = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto c = smc::residual_counts(std::vector<double>{0.26, 0.74}, 10, rng);
        EXPECT_EQ(c.residual_draws, 1u);
        const bool a = c.counts == std::vector<std::size_t>{3, 7};
        const bool b = c.counts == std::vector<std::size_t>{2, 8};
        EXPECT_TRUE(a || b);
        first += a;
    }
    // residual probabilities [0.6, 0.4]
    EXPECT_NEAR(static_cast<double>(first) / n, 0.6, 3.0 * std::sqrt(0.24 / n));
}

TEST(Residual, MeanMatchesQuota) {
    const int n = 100000;
    const auto m = mean_counts(SelectionScheme::residual, {0.55, 0.45}, 10, n, 7);
    // n_1 = 5 + Bernoulli(0.5)
    EXPECT_NEAR(m[0], 5.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Residual, FloorDominanceOnEveryDraw) {
    smc::RngStream rng(8, 0);
    for (int rep = 0; rep < 2000; ++rep) {
        std::vector<double> w(1 + rep % 9);
        for (double& x : w) x = rng.exponential();
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& x : w) x /= s;
        const std::size_t h = 1 + rep % 37;
        const auto c = smc::residual_counts(w, h, rng);
        std::size_t floors = 0;
        std::size_t total = 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const auto f = static_cast<std::size_t>(smc::snapped_floor(h * w[j]));
            EXPECT_GE(c.counts[j], f);
            floors += f;
            total += c.counts[j];
        }
        EXPECT_EQ(total, h);
        EXPECT_EQ(c.residual_draws, h - floors);
    }
}

TEST(Systematic, ExactQuotas) {
    smc::RngStream rng(9, 0);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_EQ(smc::systematic_counts(std::vector<double>{0.5, 0.5}, 10, rng).counts,
                  (std::vector<std::size_t>{5, 5}));
        EXPECT_EQ(smc::systematic_counts(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 3, rng).counts,
                  (std::vector<std::size_t>{1, 1, 1}));
    }
}

TEST(Systematic, CountsWithinOneOfQuota) {
    smc::RngStream rng(10, 0);
    bool seen_low = false;
    bool seen_high = false;
    for (int i = 0; i < 10000; ++i) {
        const auto c = smc::systematic_counts(std::vector<double>{0.26, 0.74}, 10, rng);
        const bool low = c.counts == std::vector<std::size_t>{2, 8};
        const bool high = c.counts == std::vector<std::size_t>{3, 7};
        EXPECT_TRUE(low || high);
        seen_low = seen_low || low;
        seen_high = seen_high || high;
    }
    EXPECT_TRUE(seen_low && seen_high);
}

TEST(Systematic, BracketingOnEveryDraw) {
    smc::RngStream rng(11, 0);
    for (int rep = 0; rep < 2000; ++rep) {
        std::vector<double> w(1 + rep % 11);
        for (double& x : w) x = rng.exponential();
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& x : w) x /= s;
        const std::size_t h = 1 + rep % 53;
        const auto c = smc::systematic_counts(w, h, rng);
        std::size_t total = 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double q = static_cast<double>(h) * w[j];
            EXPECT_GE(static_cast<double>(c.counts[j]), smc::snapped_floor(q));
            EXPECT_LE(static_cast<double>(c.counts[j]), std::ceil(q - 1e-12 * std::max(1.0, q)));
            total += c.counts[j];
        }
        EXPECT_EQ(total, h);
    }
}

TEST(AllSchemes, Unbiased) {
    const std::vector<double> rho = {0.05, 0.4, 0.17, 0.38};
    const std::size_t h = 13;
    const int n = 100000;
    for (SelectionScheme s : {SelectionScheme::multinomial, SelectionScheme::residual, SelectionScheme::systematic}) {
        const auto m = mean_counts(s, rho, h, n, 12);
        for (std::size_t j = 0; j < rho.size(); ++j) {
            // multinomial variance bounds the other two
            const double sd = std::sqrt(h * rho[j] * (1 - rho[j]) / n);
            EXPECT_NEAR(m[j], h * rho[j], 4.0 * sd) << smc::to_string(s) << " j=" << j;
        }
    }
}

TEST(AllSchemes, ErrorsOnZeroSize) {
    smc::RngStream rng(13, 0);
    for (SelectionScheme s : {SelectionScheme::multinomial, SelectionScheme::residual, SelectionScheme::systematic}) {
        EXPECT_THROW(smc::selection_counts(s, std::vector<double>{1.0}, 0, rng), smc::Error);
    }
    EXPECT_THROW(smc::selection_counts(SelectionScheme::none, std::vector<double>{1.0}, 3, rng), smc::Error);
}

TEST(ConditionalVariance, ResidualBelowMultinomial) {
    // Var over draws of H^-1 sum n_j phi_j: multinomial Var_rho(phi) / H,
    // residual H^r / H^2 Var_p(phi) with p the residual probabilities.
    const std::vector<double> rho = {0.12, 0.33, 0.08, 0.47};
    const std::vector<double> phi = {1.0, -2.0, 4.0, 0.5};
    const std::size_t h = 7;
    auto var_of = [&](const std::vector<double>& p) {
        double m = 0, s = 0;
        for (std::size_t j = 0; j < p.size(); ++j) m += p[j] * phi[j];
        for (std::size_t j = 0; j < p.size(); ++j) s += p[j] * (phi[j] - m) * (phi[j] - m);
        return s;
    };
    const double exact_mult = var_of(rho) / h;
    std::vector<double> frac(rho.size());
    double hr = 0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        frac[j] = h * rho[j] - std::floor(h * rho[j]);
        hr += frac[j];
    }
    for (double& f : frac) f /= hr;
    const double exact_res = hr / (h * h) * var_of(frac);
    EXPECT_LE(exact_res, exact_mult);

    const int n = 200000;
    for (auto [s, exact] : {std::pair{SelectionScheme::multinomial, exact_mult},
                            std::pair{SelectionScheme::residual, exact_res}}) {
        smc::RngStream rng(14, static_cast<std::uint64_t>(s));
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n; ++i) {
            const auto c = smc::selection_counts(s, rho, h, rng);
            double e = 0;
            for (std::size_t j = 0; j < rho.size(); ++j) e += c.counts[j] * phi[j];
            e /= h;
            sum += e;
            sum2 += e * e;
        }
        const double v = (sum2 - sum * sum / n) / (n - 1);
        // the sample variance has relative sd about sqrt(2 / n) for near-normal draws; allow kurtosis
        EXPECT_NEAR(v / exact, 1.0, 0.03) << smc::to_string(s);
    }
}

TEST(ApplySelection, Examples) {
    auto sys = smc::ParticleSystem<char>::from_weights({'a', 'b'}, std::vector<double>{0.3, 0.7}, 4);
    const auto out = smc::apply_selection(sys, smc::SelectionCounts{{2, 0}, 2, 0});
    EXPECT_EQ(out.particles, (std::vector<char>{'a', 'a'}));
    EXPECT_EQ(out.log_weights, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(out.time, 4u);
    const auto same = smc::apply_selection(sys, smc::SelectionCounts{{1, 1}, 2, 0});
    EXPECT_EQ(same.particles, sys.particles);
    auto three = smc::ParticleSystem<char>::unit_weights({'a', 'b', 'c'});
    EXPECT_EQ(smc::apply_selection(three, smc::SelectionCounts{{0, 3, 0}, 3, 0}).particles,
              (std::vector<char>{'b', 'b', 'b'}));
    EXPECT_THROW(smc::apply_selection(three, smc::SelectionCounts{{0, 2, 0}, 2, 0}), smc::Error);
    EXPECT_THROW(smc::apply_selection(three, smc::SelectionCounts{{1, 2}, 3, 0}), smc::Error);
}

TEST(Schemes, NamesRoundTrip) {
    for (SelectionScheme s : {SelectionScheme::multinomial, SelectionScheme::residual, SelectionScheme::systematic,
                              SelectionScheme::none}) {
        EXPECT_EQ(smc::parse_scheme(smc::to_string(s)), s);
    }
    EXPECT_THROW(smc::parse_scheme("stratified"), smc::Error);
}

TEST(SnappedFloor, Snapping) {
    EXPECT_EQ(smc::snapped_floor(2.9999999999999), 3.0);
    EXPECT_EQ(smc::snapped_floor(2.99), 2.0);
    EXPECT_EQ(smc::snapped_floor(3.0000000000001), 3.0);
    EXPECT_EQ(smc::fractional_part(4.0), 0.0);
    EXPECT_NEAR(smc::fractional_part(4.25), 0.25, 1e-15);
}

}  // namespace

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace smc {

/// A reproducible random stream identified by (seed, stream id).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq; both are fully
/// specified by the standard, so the raw 64-bit sequence is identical on every
/// conforming platform. The standard library distributions are not specified,
/// so every variate below is derived from the raw words by code in this file.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    /// Number of 64-bit words consumed so far.
    std::uint64_t position() const { return position_; }

    std::uint64_t next_u64() {
        ++position_;
        return engine_();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double gamma(double shape);
    double beta(double a, double b);
    bool bernoulli(double p) { return uniform() < p; }

    /// Index drawn by inversion from a cumulative distribution whose last entry
    /// is the total mass (need not be exactly one).
    std::size_t categorical_cdf(std::span<const double> cumulative);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace smc

#pragma once

#include <cmath>
#include <span>

namespace smc {

/// Neumaier compensated accumulator. Callers add terms in a fixed order so the
/// result does not depend on how the terms were produced.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            compensation_ += (sum_ - t) + x;
        } else {
            compensation_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    double value() const { return sum_ + compensation_; }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

/// Mean computed around the first element: exact for constant inputs.
inline double shifted_mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    const double ref = xs.front();
    CompensatedSum acc;
    for (double x : xs) acc.add(x - ref);
    return ref + acc.value() / static_cast<double>(xs.size());
}

/// Unbiased sample variance; exactly zero for constant inputs.
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = shifted_mean(xs);
    CompensatedSum acc;
    for (double x : xs) acc.add((x - mean) * (x - mean));
    return acc.value() / static_cast<double>(xs.size() - 1);
}

}  // namespace smc

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every particle weight vanished at a given step.
class WeightCollapse : public Error {
public:
    explicit WeightCollapse(std::size_t step)
        : Error("weight collapse at t=" + std::to_string(step)), step_(step) {}

    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// A failure inside one of several independent filter runs.
class ReplicateError : public Error {
public:
    ReplicateError(std::size_t replicate, const std::string& what)
        : Error("replicate " + std::to_string(replicate) + ": " + what), replicate_(replicate) {}

    std::size_t replicate() const { return replicate_; }

private:
    std::size_t replicate_;
};

}  // namespace smc

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smc/models/beta_bernoulli.hpp"
#include "smc/models/finite_hmm.hpp"
#include "smc/models/linear_gaussian.hpp"
#include "smc/models/marginal_pair.hpp"
#include "smc/resampling.hpp"

namespace smc::harness {

/// Invalid or incomplete configuration (maps to exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A functional description from the config's `functionals` list.
struct FunctionalSpec {
    std::string type = "indicator";   ///< indicator | state | identity | constant
    int state = 1;                    ///< for indicator
    double value = 0.0;               ///< for constant
    std::string position = "current"; ///< current | first (HMM only)

    std::string name() const;
};

struct FilterSection {
    std::size_t particles = 0;   ///< H
    std::size_t steps = 0;       ///< T
    std::size_t replicates = 0;  ///< k
    std::size_t trials = 0;      ///< M
    std::vector<SelectionScheme> schemes;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    nlohmann::json model = nlohmann::json::object();
    FilterSection filter;
    std::vector<FunctionalSpec> functionals;
    std::string out_dir;
    std::string format = "csv";
    nlohmann::json extra = nlohmann::json::object();  ///< experiment-specific keys under "filter"
};

const std::vector<std::string>& experiment_kinds();

/// Defaults of an experiment kind.
ExperimentConfig default_config(const std::string& experiment);

/// Defaults of `experiment` (or of the document's own `experiment` key)
/// overridden by the document.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& experiment = "");

/// Checks kind-specific requirements (H >= 10, k >= 2, ...).
void validate_config(const ExperimentConfig& config);

FiniteHMM build_finite_hmm(const nlohmann::json& model);
LinearGaussianSSM build_linear_gaussian(const nlohmann::json& model);
BetaBernoulliModel build_beta_bernoulli(const nlohmann::json& model);
MarginalPairModel build_marginal_pair(const nlohmann::json& model);

/// m x 1 table of a functional on HMM states.
Eigen::MatrixXd hmm_functional_table(const FunctionalSpec& spec, std::size_t states);

}  // namespace smc::harness

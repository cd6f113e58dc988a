#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace smc::harness {

struct CsvRow {
    std::size_t t = 0;
    std::string estimator;
    std::string scheme;
    std::optional<double> exact_value;
    std::optional<double> empirical_value;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    std::size_t n_replicates = 0;
};

struct ExperimentResult {
    std::string experiment;
    std::uint64_t seed = 0;
    bool passed = false;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    std::vector<CsvRow> rows;
};

/// 17 significant digits; "nan" for missing or non-finite values.
std::string format_number(std::optional<double> x);

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows);
std::string to_csv(const std::vector<CsvRow>& rows);

/// {experiment, seed, passed, metrics}
nlohmann::ordered_json summary_json(const ExperimentResult& result);

/// Summary plus the rows, for --format json.
nlohmann::ordered_json full_json(const ExperimentResult& result);

}  // namespace smc::harness

#include "smc/harness/output.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace smc::harness {

std::string format_number(std::optional<double> x) {
    if (!x || !std::isfinite(*x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *x);
    return buf;
}

void write_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
    out << "t,estimator,scheme,exact_value,empirical_value,ci_low,ci_high,n_replicates\n";
    for (const CsvRow& r : rows) {
        out << r.t << ',' << r.estimator << ',' << r.scheme << ',' << format_number(r.exact_value) << ','
            << format_number(r.empirical_value) << ',' << format_number(r.ci_low) << ','
            << format_number(r.ci_high) << ',' << r.n_replicates << '\n';
    }
}

std::string to_csv(const std::vector<CsvRow>& rows) {
    std::ostringstream out;
    write_csv(out, rows);
    return out.str();
}

nlohmann::ordered_json summary_json(const ExperimentResult& result) {
    nlohmann::ordered_json j;
    j["experiment"] = result.experiment;
    j["seed"] = result.seed;
    j["passed"] = result.passed;
    j["metrics"] = result.metrics;
    return j;
}

nlohmann::ordered_json full_json(const ExperimentResult& result) {
    nlohmann::ordered_json j = summary_json(result);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    auto num = [](std::optional<double> x) -> nlohmann::ordered_json {
        if (!x || !std::isfinite(*x)) return nullptr;
        return *x;
    };
    for (const CsvRow& r : result.rows) {
        rows.push_back({{"t", r.t},
                        {"estimator", r.estimator},
                        {"scheme", r.scheme},
                        {"exact_value", num(r.exact_value)},
                        {"empirical_value", num(r.empirical_value)},
                        {"ci_low", num(r.ci_low)},
                        {"ci_high", num(r.ci_high)},
                        {"n_replicates", r.n_replicates}});
    }
    j["rows"] = std::move(rows);
    return j;
}

}  // namespace smc::harness

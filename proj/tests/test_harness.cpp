#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "smc/harness/config.hpp"
#include "smc/harness/experiments.hpp"
#include "smc/harness/output.hpp"
#include "smc/harness/statistics.hpp"
#include "smc/rng.hpp"

namespace {

using nlohmann::json;
using namespace smc::harness;

std::string config_error(const json& doc, const std::string& kind = "") {
    try {
        parse_config(doc, kind);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

TEST(Config, DefaultsValidateForEveryKind) {
    for (const auto& kind : experiment_kinds()) {
        const auto c = default_config(kind);
        EXPECT_NO_THROW(validate_config(c)) << kind;
        EXPECT_EQ(c.seed, 20261018u);
    }
    EXPECT_THROW(default_config("nope"), ConfigError);
}

TEST(Config, OverridesApply) {
    const json doc = {{"experiment", "run"},
                      {"filter", {{"H", 50}, {"T", 4}, {"k", 3}, {"seed", 9}, {"scheme", "residual"}}},
                      {"functionals", {{{"type", "indicator"}, {"state", 0}}}},
                      {"output", {{"format", "json"}}}};
    const auto c = parse_config(doc);
    EXPECT_EQ(c.filter.particles, 50u);
    EXPECT_EQ(c.filter.steps, 4u);
    EXPECT_EQ(c.filter.replicates, 3u);
    EXPECT_EQ(c.seed, 9u);
    ASSERT_EQ(c.filter.schemes.size(), 1u);
    EXPECT_EQ(c.filter.schemes[0], smc::SelectionScheme::residual);
    EXPECT_EQ(c.functionals[0].name(), "indicator_0");
    EXPECT_EQ(c.format, "json");
}

TEST(Config, RejectsBadDocuments) {
    EXPECT_EQ(config_error(json::array()), "config must be a JSON object");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"bogus", 1}}), "unknown top-level key 'bogus'");
    EXPECT_EQ(config_error(json::object()), "no experiment given");
    EXPECT_EQ(config_error({{"experiment", "run"}}, "stability"), "config is for 'run', not 'stability'");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"filter", {{"H", 5}}}}), "H must be at least 10");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"filter", {{"k", 1}}}}), "k must be at least 2");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"filter", {{"schemes", {"multinomial", "residual"}}}}}),
              "run takes exactly one scheme");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"output", {{"format", "xml"}}}}), "format must be csv or json");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"functionals", json::array()}}),
              "at least one functional is required");
    EXPECT_EQ(config_error({{"experiment", "clt-check"}, {"filter", {{"scheme", "systematic"}}}}),
              "clt-check supports multinomial and residual schemes only");
    EXPECT_NE(config_error({{"experiment", "run"}, {"filter", {{"H", "many"}}}}).find("malformed config"),
              std::string::npos);
    EXPECT_NE(config_error({{"experiment", "run"}, {"filter", {{"scheme", "stratified"}}}}), "");
    EXPECT_EQ(config_error({{"experiment", "run"}, {"model", {{"type", "finite_hmm"}, {"preset", "four"}}}}),
              "unknown finite_hmm preset 'four'");
}

TEST(Config, FunctionalTables) {
    FunctionalSpec s;
    s.state = 2;
    const auto t = hmm_functional_table(s, 3);
    EXPECT_EQ(t(0, 0), 0.0);
    EXPECT_EQ(t(2, 0), 1.0);
    s.state = 3;
    EXPECT_THROW(hmm_functional_table(s, 3), ConfigError);
}

TEST(Statistics, Moments) {
    const std::vector<double> xs = {1, 2, 3, 4, 10};
    const auto m = sample_moments(xs);
    EXPECT_DOUBLE_EQ(m.mean, 4.0);
    EXPECT_DOUBLE_EQ(m.variance, 12.5);
    // central moments 10, 36, 278.8 with the 1/n convention
    EXPECT_NEAR(m.skewness, 36.0 / std::pow(10.0, 1.5), 1e-12);
    EXPECT_NEAR(m.excess_kurtosis, 278.8 / 100.0 - 3.0, 1e-12);
}

TEST(Statistics, VarianceIntervalAndFQuantile) {
    const auto ci = variance_interval(1.0, 1999.0);
    EXPECT_LT(ci.first, 1.0);
    EXPECT_GT(ci.second, 1.0);
    EXPECT_NEAR(ci.first, 0.9401, 2e-3);
    EXPECT_NEAR(ci.second, 1.0656, 2e-3);
    EXPECT_NEAR(f_quantile(10, 10, 0.95), 2.978, 1e-3);
}

TEST(Statistics, LogLogSlopeExamples) {
    const std::vector<double> grid = {1, 2, 5, 10, 20, 50, 100};
    auto slope_of = [&](auto f) {
        std::vector<double> v;
        for (double g : grid) v.push_back(f(g));
        return fit_loglog_slope(grid, v);
    };
    EXPECT_NEAR(slope_of([](double g) { return g; }).slope, 1.0, 1e-12);
    EXPECT_NEAR(slope_of([](double) { return 3.0; }).slope, 0.0, 1e-12);
    const auto half = slope_of([](double g) { return 7.0 * std::sqrt(g); });
    EXPECT_NEAR(half.slope, 0.5, 1e-12);
    EXPECT_NEAR(std::exp(half.intercept), 7.0, 1e-10);

    smc::RngStream rng(5, 0);
    std::vector<double> g30, v30;
    for (int i = 0; i < 30; ++i) {
        const double x = std::pow(10.0, 3.0 * i / 29.0);
        g30.push_back(x);
        v30.push_back(x * x * (1.0 + 0.01 * rng.normal()));
    }
    const auto noisy = fit_loglog_slope(g30, v30);
    EXPECT_NEAR(noisy.slope, 2.0, 0.05);
    EXPECT_LT(std::abs(noisy.slope - 2.0), noisy.slope_half_width * 3);

    const std::vector<double> bad = {1, 2, 0, 4, 5, 6, 7};
    EXPECT_THROW(fit_loglog_slope(grid, bad), smc::Error);
}

TEST(Statistics, LinearFit) {
    const std::vector<double> x = {0, 1, 2, 3};
    const std::vector<double> y = {1, 3, 5, 7};
    const auto f = fit_linear(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
}

TEST(Statistics, NormalityBandsRarelyRejectNormalSamples) {
    // the band |skew| < 0.15, |excess kurtosis| < 0.3 at M = 2000
    smc::RngStream rng(6, 0);
    int rejected = 0;
    const int reps = 400;
    std::vector<double> xs(2000);
    for (int r = 0; r < reps; ++r) {
        for (double& x : xs) x = rng.normal();
        const auto m = sample_moments(xs);
        if (std::abs(m.skewness) >= 0.15 || std::abs(m.excess_kurtosis) >= 0.3) ++rejected;
    }
    EXPECT_LT(rejected, reps * 4 / 100);
}

TEST(Statistics, AndersonDarling) {
    smc::RngStream rng(7, 0);
    std::vector<double> xs(2000);
    for (double& x : xs) x = rng.normal();
    EXPECT_LT(anderson_darling_normal(xs), 2.5);
    for (double& x : xs) x = 2.0 * x + 1.0;
    EXPECT_GT(anderson_darling_normal(xs), 10.0);
}

TEST(Output, CsvFormat) {
    std::vector<CsvRow> rows(2);
    rows[0] = {3, "indicator_1:pre_selection", "multinomial", 0.1, 1.0 / 3.0, std::nullopt, INFINITY, 7};
    rows[1] = {4, "x", "none", std::nullopt, NAN, 0.0, -2.5, 0};
    EXPECT_EQ(to_csv(rows),
              "t,estimator,scheme,exact_value,empirical_value,ci_low,ci_high,n_replicates\n"
              "3,indicator_1:pre_selection,multinomial,0.10000000000000001,0.33333333333333331,nan,nan,7\n"
              "4,x,none,nan,nan,0,-2.5,0\n");
    ExperimentResult r;
    r.experiment = "run";
    r.seed = 1;
    r.rows = rows;
    const auto j = full_json(r);
    EXPECT_TRUE(j["rows"][0]["ci_low"].is_null());
    EXPECT_EQ(j["rows"][1]["ci_high"], -2.5);
    EXPECT_EQ(summary_json(r).dump(), R"({"experiment":"run","seed":1,"passed":false,"metrics":{}})");
}

TEST(Experiments, CltWithConstantFunctionalIsDegenerate) {
    const json doc = {{"experiment", "clt-check"},
                      {"model", {{"type", "finite_hmm"}, {"preset", "two_state"}, {"steps", 3}}},
                      {"filter", {{"H", 50}, {"T", 3}, {"M", 8}}},
                      {"functionals", {{{"type", "constant"}, {"value", 2.0}}}}};
    const auto r = run_experiment(parse_config(doc), 1);
    EXPECT_TRUE(r.passed);
    for (const auto& row : r.rows) {
        EXPECT_EQ(*row.exact_value, 0.0) << row.t;
        EXPECT_EQ(*row.empirical_value, 0.0);
    }
}

TEST(Experiments, RunIsReproducibleAcrossThreadCounts) {
    const json doc = {{"experiment", "run"}, {"filter", {{"H", 200}, {"T", 5}, {"k", 4}}}};
    const auto c = parse_config(doc);
    const auto a = run_experiment(c, 1);
    const auto b = run_experiment(c, 3);
    EXPECT_EQ(to_csv(a.rows), to_csv(b.rows));
    EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
}

}  // namespace

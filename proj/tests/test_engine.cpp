#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "smc/engine.hpp"
#include "smc/models/beta_bernoulli.hpp"
#include "smc/models/finite_hmm.hpp"
#include "smc/models/linear_gaussian.hpp"
#include "smc/models/marginal_pair.hpp"
#include "smc/variance/asymptotic.hpp"
#include "smc/variance/flow.hpp"

namespace {

using smc::FilterConfig;
using smc::HmmParticle;
using smc::ModelSpec;
using smc::SelectionScheme;
using smc::SelectionSchedule;

smc::Functional<HmmParticle> hmm_indicator(int state) {
    return smc::scalar_functional<HmmParticle>("indicator_" + std::to_string(state),
                                               [state](const HmmParticle& p) { return p.current == state ? 1.0 : 0.0; });
}

template <typename State>
FilterConfig<State> config(std::size_t h, std::size_t steps, SelectionScheme scheme, smc::Functional<State> f) {
    FilterConfig<State> c;
    c.particles = h;
    c.steps = steps;
    c.scheme = scheme;
    c.schedule = scheme == SelectionScheme::none ? SelectionSchedule::never : SelectionSchedule::every_step;
    c.seed = 20261018;
    c.functionals.push_back({std::move(f), {}});
    return c;
}

/// Random walk with unit weights: proposal equals target.
ModelSpec<double> unit_weight_walk(std::size_t horizon) {
    ModelSpec<double> m;
    m.name = "walk";
    m.horizon = horizon;
    m.sample_initial = [](smc::RngStream& rng) { return rng.normal(); };
    m.kernel_for_step = [](std::size_t, std::span<const double>) -> smc::MutationKernel<double> {
        return [](const double& x, smc::RngStream& rng) { return x + rng.normal(); };
    };
    m.log_weight = [](std::size_t, const double&, const double*) { return 0.0; };
    return m;
}

TEST(RunFilter, UnitWeightsEqualPlainMonteCarlo) {
    const auto model = unit_weight_walk(5);
    const auto identity = smc::scalar_functional<double>("x", [](double x) { return x; });
    auto c = config<double>(257, 5, SelectionScheme::none, identity);
    const auto trace = smc::run_sis(model, c);

    // the same draws by hand: initial cloud, then one kernel draw per particle per step
    smc::RngStream rng(c.seed, c.stream);
    std::vector<double> xs(c.particles);
    for (double& x : xs) x = rng.normal();
    for (std::size_t t = 0; t <= 5; ++t) {
        if (t > 0) {
            for (double& x : xs) x = x + rng.normal();
        }
        const double plain = smc::unweighted_estimate(smc::ParticleSystem<double>::unit_weights(xs), identity)[0];
        EXPECT_EQ(trace.steps[t].weighted[0][0], plain) << "t=" << t;
        EXPECT_DOUBLE_EQ(trace.steps[t].ess, 257.0);
    }

    // with selection the two estimates of a unit-weight system have the same law;
    // pre-selection is still the plain mean of the mutated cloud
    auto cm = config<double>(257, 5, SelectionScheme::multinomial, identity);
    const auto sel = smc::run_filter(model, cm);
    for (const auto& s : sel.steps) {
        ASSERT_TRUE(s.unweighted.has_value());
        EXPECT_TRUE(std::isfinite((*s.unweighted)[0][0]));
    }
}

TEST(RunFilter, TwoStateHmmMatchesForwardAlgorithm) {
    const auto hmm = smc::two_state_hmm(20);
    const auto model = smc::make_hmm_model(hmm);
    const auto f = hmm_indicator(1);
    const auto c = config<HmmParticle>(10000, 20, SelectionScheme::multinomial, f);
    const auto rep = smc::run_replicates(model, c, 30, 20261018, 1);
    const double exact = smc::finite_hmm_forward(hmm, 20).filter[20](1);
    EXPECT_DOUBLE_EQ((*model.exact_mean(20, f))[0], exact);
    const double se = std::sqrt(rep.empirical_variance[0][0] / 30.0);
    const double single_se = std::sqrt(rep.empirical_variance[0][0]);
    for (const auto& est : rep.final_estimates[0]) EXPECT_LT(std::abs(est[0] - exact), 5.0 * single_se);
    EXPECT_LT(std::abs(rep.pooled_mean[0][0] - exact), 5.0 * se);
}

TEST(RunFilter, GaussianBootstrapMatchesKalman) {
    smc::LinearGaussianSSM ssm;
    smc::RngStream data(5, 0);
    ssm.observations = smc::simulate_gaussian(ssm, 20, data).observations;
    const auto model = smc::make_gaussian_model(ssm);
    const auto f = smc::scalar_functional<double>("x", [](double x) { return x; });
    const auto c = config<double>(10000, 20, SelectionScheme::multinomial, f);
    const auto rep = smc::run_replicates(model, c, 10, 11, 1);
    const double exact = smc::kalman_filter(ssm)[20].mean;
    EXPECT_NEAR((*model.exact_mean(20, f))[0], exact, 1e-15);
    for (const auto& est : rep.final_estimates[0]) {
        EXPECT_LT(std::abs(est[0] - exact), 5.0 * std::sqrt(rep.empirical_variance[0][0]));
    }
}

TEST(RunSis, SingleStepIsImportanceSampling) {
    ModelSpec<double> m = unit_weight_walk(1);
    m.log_weight = [](std::size_t t, const double& x, const double* parent) {
        return t == 0 ? -0.5 * x * x : -0.25 * (x - *parent) * (x - *parent) + std::sin(x);
    };
    const auto identity = smc::scalar_functional<double>("x", [](double x) { return x; });
    const auto c = config<double>(100, 1, SelectionScheme::none, identity);
    const auto trace = smc::run_sis(m, c);

    smc::RngStream rng(c.seed, c.stream);
    std::vector<double> x0(100), x1(100), lw(100);
    for (double& x : x0) x = rng.normal();
    for (std::size_t j = 0; j < 100; ++j) x1[j] = x0[j] + rng.normal();
    double num = 0, den = 0;
    for (std::size_t j = 0; j < 100; ++j) {
        const double w = std::exp(m.log_weight(0, x0[j], nullptr) + m.log_weight(1, x1[j], &x0[j]));
        num += w * x1[j];
        den += w;
    }
    EXPECT_NEAR(trace.steps[1].weighted[0][0], num / den, 1e-13);
    EXPECT_FALSE(trace.steps[1].unweighted.has_value());
}

TEST(RunSis, BetaBernoulliPosteriorMean) {
    const auto bb = smc::default_beta_bernoulli(50, 0.3, 7);
    const auto model = smc::make_beta_bernoulli_model(bb);
    const auto f = smc::scalar_functional<double>("theta", [](double x) { return x; });
    const auto c = config<double>(100000, 50, SelectionScheme::none, f);
    const auto rep = smc::run_replicates(model, c, 10, 3, 1);
    const double exact = smc::beta_posterior(bb, 50).mean();
    EXPECT_NEAR((*model.exact_mean(50, f))[0], exact, 1e-15);
    EXPECT_LT(std::abs(rep.pooled_mean[0][0] - exact), 5.0 * std::sqrt(rep.empirical_variance[0][0] / 10.0));
    for (const auto& tr : rep.traces) {
        for (const auto& s : tr.steps) EXPECT_GT(s.max_normalized_weight, 0.0);
    }
}

TEST(RunSis, RejectsSelection) {
    const auto model = unit_weight_walk(3);
    auto c = config<double>(10, 3, SelectionScheme::multinomial,
                            smc::scalar_functional<double>("x", [](double x) { return x; }));
    EXPECT_THROW(smc::run_sis(model, c), smc::Error);
}

TEST(ResampleMove, BetaBernoulliPosteriorMean) {
    const auto bb = smc::default_beta_bernoulli(100, 0.3, 7);
    const auto model = smc::make_beta_bernoulli_model(bb, true);
    EXPECT_TRUE(model.kernel_is_invariant);
    const auto f = smc::scalar_functional<double>("theta", [](double x) { return x; });
    const auto c = config<double>(5000, 100, SelectionScheme::residual, f);
    const auto rep = smc::run_replicates(model, c, 10, 4, 1);
    const double exact = smc::beta_posterior(bb, 100).mean();
    EXPECT_LT(std::abs(rep.pooled_mean[0][0] - exact), 5.0 * std::sqrt(rep.empirical_variance[0][0] / 10.0));
    // the move step keeps the cloud diverse, unlike plain SIR on a fixed parameter
    EXPECT_GT(rep.traces[0].steps.back().ess, 100.0);
}

TEST(RunFilter, WeightCollapseCarriesStep) {
    ModelSpec<double> m = unit_weight_walk(5);
    m.log_weight = [](std::size_t t, const double&, const double*) {
        return t == 3 ? -std::numeric_limits<double>::infinity() : 0.0;
    };
    auto c = config<double>(10, 5, SelectionScheme::multinomial,
                            smc::scalar_functional<double>("x", [](double x) { return x; }));
    try {
        smc::run_filter(m, c);
        FAIL() << "expected a weight collapse";
    } catch (const smc::WeightCollapse& e) {
        EXPECT_EQ(e.step(), 3u);
        EXPECT_STREQ(e.what(), "weight collapse at t=3");
    }
    try {
        smc::run_replicates(m, c, 3, 1, 1);
        FAIL() << "expected a replicate error";
    } catch (const smc::ReplicateError& e) {
        EXPECT_EQ(e.replicate(), 0u);
    }
    m.log_weight = [](std::size_t t, const double&, const double*) { return t == 2 ? std::nan("") : 0.0; };
    EXPECT_THROW(smc::run_filter(m, c), smc::Error);
}

TEST(RunFilter, ConfigValidation) {
    const auto model = unit_weight_walk(3);
    auto c = config<double>(10, 3, SelectionScheme::multinomial,
                            smc::scalar_functional<double>("x", [](double x) { return x; }));
    auto bad = c;
    bad.schedule = SelectionSchedule::never;
    EXPECT_THROW(smc::run_filter(model, bad), smc::Error);
    bad = c;
    bad.particles = 0;
    EXPECT_THROW(smc::run_filter(model, bad), smc::Error);
    bad = c;
    bad.steps = 4;
    EXPECT_THROW(smc::run_filter(model, bad), smc::Error);
    bad = c;
    bad.schedule = SelectionSchedule::explicit_times;
    bad.selection_times = {5};
    EXPECT_THROW(smc::run_filter(model, bad), smc::Error);
}

TEST(RunFilter, ExplicitScheduleSelectsOnlyAtListedTimes) {
    const auto hmm = smc::two_state_hmm(6);
    auto c = config<HmmParticle>(500, 6, SelectionScheme::residual, hmm_indicator(0));
    c.schedule = SelectionSchedule::explicit_times;
    c.selection_times = {2, 5};
    const auto trace = smc::run_filter(smc::make_hmm_model(hmm), c);
    for (const auto& s : trace.steps) EXPECT_EQ(s.unweighted.has_value(), s.t == 2 || s.t == 5) << s.t;
    // weights carry over between selections, so ESS drops below H at t=4
    EXPECT_LT(trace.steps[4].ess, 500.0);
    EXPECT_LT(trace.steps[3].ess, 500.0);
}

TEST(RunFilter, BitReproducible) {
    const auto hmm = smc::two_state_hmm(10);
    const auto model = smc::make_hmm_model(hmm);
    for (SelectionScheme s : {SelectionScheme::multinomial, SelectionScheme::residual, SelectionScheme::systematic,
                              SelectionScheme::none}) {
        auto c = config<HmmParticle>(777, 10, s, hmm_indicator(1));
        const auto a = smc::run_filter(model, c);
        const auto b = smc::run_filter(model, c);
        c.stream = 1;
        const auto other = smc::run_filter(model, c);
        bool differs = false;
        for (std::size_t t = 0; t <= 10; ++t) {
            EXPECT_EQ(a.steps[t].weighted, b.steps[t].weighted);
            EXPECT_EQ(a.steps[t].unweighted, b.steps[t].unweighted);
            EXPECT_EQ(a.steps[t].ess, b.steps[t].ess);
            EXPECT_EQ(a.steps[t].log_mean_weight, b.steps[t].log_mean_weight);
            differs = differs || a.steps[t].weighted != other.steps[t].weighted;
        }
        EXPECT_TRUE(differs);
    }
}

TEST(RunReplicates, PooledMeanAndDeterministicModel) {
    ModelSpec<double> m = unit_weight_walk(4);
    m.sample_initial = [](smc::RngStream&) { return 1.5; };
    m.kernel_for_step = [](std::size_t, std::span<const double>) -> smc::MutationKernel<double> {
        return [](const double& x, smc::RngStream&) { return 0.5 * x; };
    };
    auto c = config<double>(50, 4, SelectionScheme::multinomial,
                            smc::scalar_functional<double>("x", [](double x) { return x; }));
    const auto rep = smc::run_replicates(m, c, 5, 9, 2);
    EXPECT_EQ(rep.empirical_variance[0][0], 0.0);
    EXPECT_EQ(rep.pooled_mean[0][0], 1.5 / 16);
    EXPECT_THROW(smc::run_replicates(m, c, 1, 9), smc::Error);

    const auto hmm = smc::two_state_hmm(5);
    const auto rep2 = smc::run_replicates(smc::make_hmm_model(hmm),
                                          config<HmmParticle>(200, 5, SelectionScheme::residual, hmm_indicator(1)),
                                          10, 9, 2);
    double sum = 0;
    for (const auto& e : rep2.final_estimates[0]) sum += e[0];
    EXPECT_NEAR(rep2.pooled_mean[0][0], sum / 10, 1e-15);
    EXPECT_GE(rep2.empirical_variance[0][0], 0.0);
    ASSERT_EQ(rep2.step_variance.size(), 6u);
}

TEST(RunReplicates, ThreadCountDoesNotChangeResults) {
    const auto hmm = smc::two_state_hmm(5);
    const auto model = smc::make_hmm_model(hmm);
    const auto c = config<HmmParticle>(300, 5, SelectionScheme::systematic, hmm_indicator(1));
    const auto a = smc::run_replicates(model, c, 8, 42, 1);
    const auto b = smc::run_replicates(model, c, 8, 42, 3);
    EXPECT_EQ(a.final_estimates, b.final_estimates);
    EXPECT_EQ(a.pooled_mean, b.pooled_mean);
}

TEST(RunReplicates, DoublingParticlesHalvesVariance) {
    const auto hmm = smc::two_state_hmm(10);
    const auto model = smc::make_hmm_model(hmm);
    const auto small = smc::run_replicates(
        model, config<HmmParticle>(500, 10, SelectionScheme::multinomial, hmm_indicator(1)), 200, 21, 1);
    const auto large = smc::run_replicates(
        model, config<HmmParticle>(1000, 10, SelectionScheme::multinomial, hmm_indicator(1)), 200, 22, 1);
    const double ratio = large.empirical_variance[0][0] / small.empirical_variance[0][0];
    EXPECT_GE(ratio, 1.0 / 3.0);
    EXPECT_LE(ratio, 3.0 / 4.0);
}

TEST(RunReplicates, ErrorShrinksLikeInverseRootH) {
    const auto hmm = smc::two_state_hmm(10);
    const auto model = smc::make_hmm_model(hmm);
    std::vector<double> sds;
    for (std::size_t h : {1000, 10000, 100000}) {
        const auto rep = smc::run_replicates(
            model, config<HmmParticle>(h, 10, SelectionScheme::multinomial, hmm_indicator(1)), 50, 30 + h, 1);
        sds.push_back(std::sqrt(rep.empirical_variance[0][0]));
    }
    for (std::size_t i = 0; i + 1 < sds.size(); ++i) {
        const double r = sds[i + 1] / sds[i];
        EXPECT_GE(r, 0.2) << i;
        EXPECT_LE(r, 0.5) << i;
    }
}

TEST(RunReplicates, PostSelectionNoisierThanPreSelection) {
    const auto hmm = smc::two_state_hmm(10);
    const auto model = smc::make_hmm_model(hmm);
    auto c = config<HmmParticle>(1000, 10, SelectionScheme::multinomial, hmm_indicator(1));
    const auto rep = smc::run_replicates(model, c, 400, 23, 1);
    std::vector<double> pre, post;
    for (const auto& tr : rep.traces) {
        pre.push_back(tr.steps[10].weighted[0][0]);
        post.push_back((*tr.steps[10].unweighted)[0][0]);
    }
    // exact post / pre ratio on this instance
    const auto flow = smc::hmm_filtering_flow(hmm, 10);
    std::vector<Eigen::MatrixXd> phis;
    Eigen::MatrixXd table(2, 1);
    table << 0.0, 1.0;
    for (std::size_t t = 0; t <= 10; ++t) phis.push_back(smc::tabulate_position(flow, t, t, table));
    const auto report = smc::recursion_variances(flow, phis, SelectionScheme::multinomial);
    const double exact_ratio = report.rows[10].hat(0, 0) / report.rows[10].v(0, 0);
    ASSERT_GT(exact_ratio, 1.3);
    EXPECT_GT(smc::sample_variance(post), smc::sample_variance(pre));
}

TEST(MarginalPair, ConstantFunctionalAndGuards) {
    const auto pair = smc::example_marginal_pair(false, 5, 3);
    const auto joint = smc::make_pair_joint_model(pair);
    const auto marginal = smc::make_pair_marginal_model(pair);
    auto c = config<smc::PairState>(200, 5, SelectionScheme::residual, smc::constant_functional<smc::PairState>(0.7));
    const auto traces = smc::run_marginal_pair(joint, marginal, smc::pair_embedding(), c);
    for (std::size_t t = 0; t <= 5; ++t) {
        EXPECT_EQ(traces.joint.steps[t].weighted[0][0], 0.7);
        EXPECT_EQ(traces.marginal.steps[t].weighted[0][0], 0.7);
    }
    auto lam = smc::scalar_functional<smc::PairState>("lambda", [](const smc::PairState& s) { return s.lambda; });
    lam.uses_conditional = true;
    c.functionals = {{lam, {}}};
    EXPECT_THROW(smc::run_marginal_pair(joint, marginal, smc::pair_embedding(), c), smc::Error);
    auto pairing = smc::pair_embedding();
    pairing.kernels_compatible = false;
    c.functionals = {{smc::constant_functional<smc::PairState>(1.0), {}}};
    EXPECT_THROW(smc::run_marginal_pair(joint, marginal, pairing, c), smc::Error);
}

TEST(MarginalPair, BothFiltersHitTheExactMean) {
    const auto pair = smc::example_marginal_pair(false, 5, 3);
    const auto joint = smc::make_pair_joint_model(pair);
    const auto marginal = smc::make_pair_marginal_model(pair);
    const auto f = smc::scalar_functional<smc::PairState>("xi0", [](const smc::PairState& s) { return s.xi == 0; });
    const double exact = (*joint.exact_mean(5, f))[0];
    std::vector<double> js, ms;
    for (std::uint64_t r = 0; r < 20; ++r) {
        auto c = config<smc::PairState>(5000, 5, SelectionScheme::multinomial, f);
        c.stream = 2 * r;
        const auto tr = smc::run_marginal_pair(joint, marginal, smc::pair_embedding(), c);
        js.push_back(tr.joint.steps[5].weighted[0][0]);
        ms.push_back(tr.marginal.steps[5].weighted[0][0]);
    }
    EXPECT_LT(std::abs(smc::shifted_mean(js) - exact), 5.0 * std::sqrt(smc::sample_variance(js) / 20));
    EXPECT_LT(std::abs(smc::shifted_mean(ms) - exact), 5.0 * std::sqrt(smc::sample_variance(ms) / 20));
}

}  // namespace

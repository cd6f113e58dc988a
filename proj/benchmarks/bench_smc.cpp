#include <vector>

#include <benchmark/benchmark.h>

#include "smc/engine.hpp"
#include "smc/models/beta_bernoulli.hpp"
#include "smc/models/finite_hmm.hpp"
#include "smc/resampling.hpp"
#include "smc/rng.hpp"
#include "smc/variance/asymptotic.hpp"
#include "smc/variance/fixed_parameter.hpp"
#include "smc/variance/flow.hpp"

namespace {

std::vector<double> random_weights(std::size_t n) {
    smc::RngStream rng(1, 0);
    std::vector<double> w(n);
    double total = 0;
    for (double& x : w) total += (x = rng.exponential());
    for (double& x : w) x /= total;
    return w;
}

void selection(benchmark::State& state, smc::SelectionScheme scheme) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto rho = random_weights(n);
    smc::RngStream rng(2, 0);
    for (auto _ : state) benchmark::DoNotOptimize(smc::selection_counts(scheme, rho, n, rng));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK_CAPTURE(selection, multinomial, smc::SelectionScheme::multinomial)->RangeMultiplier(10)->Range(1000, 100000);
BENCHMARK_CAPTURE(selection, residual, smc::SelectionScheme::residual)->RangeMultiplier(10)->Range(1000, 100000);
BENCHMARK_CAPTURE(selection, systematic, smc::SelectionScheme::systematic)->RangeMultiplier(10)->Range(1000, 100000);

void hmm_filter(benchmark::State& state, smc::SelectionScheme scheme) {
    const auto hmm = smc::two_state_hmm(10);
    const auto model = smc::make_hmm_model(hmm);
    smc::FilterConfig<smc::HmmParticle> c;
    c.particles = static_cast<std::size_t>(state.range(0));
    c.steps = 10;
    c.scheme = scheme;
    c.functionals.push_back(
        {smc::scalar_functional<smc::HmmParticle>("x", [](const smc::HmmParticle& p) { return p.current; }), {}});
    for (auto _ : state) {
        benchmark::DoNotOptimize(smc::run_filter(model, c));
        ++c.stream;
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(c.particles * c.steps));
}
BENCHMARK_CAPTURE(hmm_filter, multinomial, smc::SelectionScheme::multinomial)->Arg(1000)->Arg(10000);
BENCHMARK_CAPTURE(hmm_filter, residual, smc::SelectionScheme::residual)->Arg(1000)->Arg(10000);

void exact_variance_recursion(benchmark::State& state) {
    const auto steps = static_cast<std::size_t>(state.range(0));
    const auto hmm = smc::three_state_stable_hmm(steps, 11);
    const auto flow = smc::hmm_filtering_flow(hmm, steps);
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, 1);
    phi(0, 0) = 1.0;
    std::vector<Eigen::MatrixXd> tables;
    for (std::size_t t = 0; t <= steps; ++t) tables.push_back(smc::tabulate_position(flow, t, t, phi));
    for (auto _ : state) {
        benchmark::DoNotOptimize(smc::recursion_variances(flow, tables, smc::SelectionScheme::residual));
    }
}
BENCHMARK(exact_variance_recursion)->Arg(50)->Arg(200);

void beta_residual_variance(benchmark::State& state) {
    const auto t = static_cast<std::size_t>(state.range(0));
    const auto model = smc::default_beta_bernoulli(t, 0.3, 7);
    for (auto _ : state) {
        smc::BetaBernoulliVariance v(model, [](double x) { return x; });
        benchmark::DoNotOptimize(v.residual(t));
    }
}
BENCHMARK(beta_residual_variance)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

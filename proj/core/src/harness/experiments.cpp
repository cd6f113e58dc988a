#include "smc/harness/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "smc/engine.hpp"
#include "smc/harness/statistics.hpp"
#include "smc/variance/asymptotic.hpp"
#include "smc/variance/fixed_parameter.hpp"
#include "smc/variance/flow.hpp"
#include "smc/variance/stability.hpp"

namespace smc::harness {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kExactTolerance = 1e-10;

std::string model_type(const ExperimentConfig& c) { return c.model.at("type").get<std::string>(); }

double extra_double(const ExperimentConfig& c, const char* key, double fallback) {
    return c.extra.contains(key) ? c.extra.at(key).get<double>() : fallback;
}

std::size_t extra_size(const ExperimentConfig& c, const char* key, std::size_t fallback) {
    return c.extra.contains(key) ? c.extra.at(key).get<std::size_t>() : fallback;
}

std::string scheme_name(SelectionScheme s) { return std::string(to_string(s)); }

void require_model(const ExperimentConfig& c, const std::string& type) {
    if (model_type(c) != type) {
        throw ConfigError(c.experiment + " needs a " + type + " model, got '" + model_type(c) + "'");
    }
}

// ---- functionals ---------------------------------------------------------

bool reads_first(const FunctionalSpec& spec) {
    if (spec.position == "first") return true;
    if (spec.position == "current") return false;
    throw ConfigError("functional position must be 'current' or 'first'");
}

Functional<HmmParticle> hmm_functional(const FunctionalSpec& spec, std::size_t states) {
    const Eigen::MatrixXd table = hmm_functional_table(spec, states);
    std::vector<double> values(table.col(0).data(), table.col(0).data() + table.rows());
    const bool first = reads_first(spec);
    return scalar_functional<HmmParticle>(
        spec.name(), [values, first](const HmmParticle& p) { return values[first ? p.first : p.current]; },
        variation(table.col(0)));
}

Functional<double> real_functional(const FunctionalSpec& spec, const std::string& identity_name) {
    if (spec.type == "constant") return constant_functional<double>(spec.value);
    if (spec.type == "identity") {
        return scalar_functional<double>(identity_name, [](double x) { return x; });
    }
    throw ConfigError("functional type '" + spec.type + "' is not defined on a real state");
}

Eigen::VectorXd pair_table(const FunctionalSpec& spec, std::size_t xi_states) {
    if (spec.position != "current") throw ConfigError("marginal pair functionals read the current xi only");
    return hmm_functional_table(spec, xi_states).col(0);
}

Functional<PairState> pair_functional(const FunctionalSpec& spec, std::size_t xi_states) {
    const Eigen::VectorXd table = pair_table(spec, xi_states);
    std::vector<double> values(table.data(), table.data() + table.size());
    return scalar_functional<PairState>(spec.name(), [values](const PairState& p) { return values[p.xi]; },
                                        variation(table));
}

// ---- exact variance inputs -----------------------------------------------

FiniteFlow hmm_flow_for(const FiniteHMM& h, std::size_t steps, const FunctionalSpec& spec) {
    return reads_first(spec) ? hmm_anchored_flow(h, steps, 1) : hmm_filtering_flow(h, steps);
}

std::vector<Eigen::MatrixXd> hmm_phis(const FiniteFlow& flow, const FunctionalSpec& spec,
                                      const Eigen::MatrixXd& table) {
    const bool first = reads_first(spec);
    std::vector<Eigen::MatrixXd> phis;
    for (std::size_t t = 0; t <= flow.steps(); ++t) {
        phis.push_back(tabulate_position(flow, t, first ? std::min<std::size_t>(t, 1) : t, table));
    }
    return phis;
}

std::vector<Eigen::MatrixXd> pair_phis(const FiniteFlow& flow, const Eigen::VectorXd& table) {
    std::vector<Eigen::MatrixXd> phis;
    for (std::size_t t = 0; t <= flow.steps(); ++t) {
        phis.push_back(tabulate(
            flow, t, [&table](std::span<const int> c, std::span<double> out) { out[0] = table(c[0]); }, 1));
    }
    return phis;
}

// ---- Monte Carlo helpers -------------------------------------------------

template <typename State>
FilterConfig<State> filter_config(const ExperimentConfig& c, SelectionScheme scheme, std::uint64_t stream,
                                  const std::vector<Functional<State>>& functionals) {
    FilterConfig<State> f;
    f.particles = c.filter.particles;
    f.steps = c.filter.steps;
    f.scheme = scheme;
    f.schedule = scheme == SelectionScheme::none ? SelectionSchedule::never : SelectionSchedule::every_step;
    f.seed = c.seed;
    f.stream = stream;
    for (const auto& fn : functionals) f.functionals.push_back({fn, {}});
    return f;
}

struct TrialValues {
    // [trial][step][functional]
    std::vector<std::vector<std::vector<double>>> pre;
    std::vector<std::vector<std::vector<double>>> post;
};

template <typename State>
TrialValues run_trials(const ModelSpec<State>& model, const ExperimentConfig& c, SelectionScheme scheme,
                       std::uint64_t stream_offset, const std::vector<Functional<State>>& functionals,
                       std::optional<std::size_t> threads) {
    const std::size_t trials = c.filter.trials;
    TrialValues out;
    out.pre.resize(trials);
    out.post.resize(trials);
    parallel_for(trials, resolve_threads(threads), [&](std::size_t m) {
        const FilterTrace trace = run_filter(model, filter_config(c, scheme, stream_offset + m, functionals));
        for (const StepRecord& rec : trace.steps) {
            std::vector<double> pre, post;
            for (std::size_t f = 0; f < functionals.size(); ++f) {
                pre.push_back(rec.weighted[f][0]);
                post.push_back(rec.unweighted ? (*rec.unweighted)[f][0] : std::numeric_limits<double>::quiet_NaN());
            }
            out.pre[m].push_back(std::move(pre));
            out.post[m].push_back(std::move(post));
        }
    });
    return out;
}

std::vector<double> column(const std::vector<std::vector<std::vector<double>>>& values, std::size_t step,
                           std::size_t f) {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& trial : values) out.push_back(trial[step][f]);
    return out;
}

ojson interval_json(std::pair<double, double> ci) { return ojson::array({ci.first, ci.second}); }

// ---- run -----------------------------------------------------------------

template <typename State>
ExperimentResult replicate_report(const ExperimentConfig& c, const ModelSpec<State>& model,
                                  const std::vector<Functional<State>>& functionals,
                                  std::optional<std::size_t> threads) {
    const SelectionScheme scheme = c.filter.schemes.front();
    const std::size_t k = c.filter.replicates;
    const ReplicateSummary summary =
        run_replicates(model, filter_config(c, scheme, 0, functionals), k, c.seed, threads);

    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.passed = true;
    r.metrics["model"] = model.name;
    r.metrics["H"] = c.filter.particles;
    r.metrics["T"] = c.filter.steps;
    r.metrics["k"] = k;
    r.metrics["scheme"] = scheme_name(scheme);
    ojson per_functional = ojson::array();
    const std::size_t nsteps = summary.traces.front().steps.size();
    for (std::size_t f = 0; f < functionals.size(); ++f) {
        for (std::size_t s = 0; s < nsteps; ++s) {
            std::vector<double> values;
            for (const auto& tr : summary.traces) values.push_back(tr.steps[s].weighted[f][0]);
            const double mean = shifted_mean(values);
            const double se = std::sqrt(sample_variance(values) / static_cast<double>(k));
            std::optional<double> exact;
            if (model.exact_mean) {
                if (auto e = model.exact_mean(s, functionals[f])) exact = (*e)[0];
            }
            r.rows.push_back({s, functionals[f].name + ":weighted", scheme_name(scheme), exact, mean,
                              mean - 1.96 * se, mean + 1.96 * se, k});
            if (s + 1 == nsteps) {
                ojson m;
                m["functional"] = functionals[f].name;
                m["pooled_mean"] = mean;
                m["standard_error"] = se;
                m["replicate_variance"] = sample_variance(values);
                if (exact) {
                    const double err = std::abs(mean - *exact);
                    const bool ok = se > 0.0 ? err <= 5.0 * se : err <= 1e-12;
                    m["exact"] = *exact;
                    m["z"] = se > 0.0 ? (mean - *exact) / se : 0.0;
                    m["within_5_se"] = ok;
                    r.passed = r.passed && ok;
                }
                per_functional.push_back(std::move(m));
            }
        }
    }
    r.metrics["final"] = std::move(per_functional);
    return r;
}

// ---- clt-check -----------------------------------------------------------

struct CltVerdict {
    ojson metrics;
    bool passed = true;
};

CltVerdict clt_rows(ExperimentResult& r, const std::vector<double>& estimates, double oracle, double exact_var,
                    double particles, std::size_t t, const std::string& estimator, const std::string& scheme,
                    bool final_step) {
    // rounding leaves ~1e-32 where the functional is constant under pi_t
    if (std::abs(exact_var) <= 1e-15 * (1.0 + oracle * oracle)) exact_var = 0.0;
    std::vector<double> z(estimates.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::sqrt(particles) * (estimates[i] - oracle);
    const Moments mom = sample_moments(z);
    const auto ci = variance_interval(mom.variance, static_cast<double>(z.size() - 1));
    r.rows.push_back({t, estimator, scheme, exact_var, mom.variance, ci.first, ci.second, z.size()});
    CltVerdict v;
    if (!final_step) return v;
    std::vector<double> standardized(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        standardized[i] = exact_var > 0.0 ? (z[i] - mom.mean) / std::sqrt(exact_var) : 0.0;
    }
    const double ratio = exact_var > 0.0 ? mom.variance / exact_var : (mom.variance == 0.0 ? 1.0 : INFINITY);
    v.metrics["t"] = t;
    v.metrics["exact_variance"] = exact_var;
    v.metrics["empirical_variance"] = mom.variance;
    v.metrics["variance_ratio"] = ratio;
    v.metrics["ratio_ci"] =
        exact_var > 0.0 ? interval_json({ci.first / exact_var, ci.second / exact_var}) : interval_json({1.0, 1.0});
    v.metrics["mean_error"] = mom.mean;
    v.metrics["skewness"] = mom.skewness;
    v.metrics["excess_kurtosis"] = mom.excess_kurtosis;
    if (exact_var > 0.0) v.metrics["anderson_darling"] = anderson_darling_normal(standardized);
    const bool ok = ratio >= 0.9 && ratio <= 1.1 && std::abs(mom.skewness) < 0.15 &&
                    std::abs(mom.excess_kurtosis) < 0.3;
    v.metrics["passed"] = ok;
    v.passed = ok;
    return v;
}

}  // namespace

ExperimentResult run_filters(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    const std::string type = model_type(c);
    if (type == "finite_hmm") {
        const FiniteHMM h = build_finite_hmm(c.model);
        std::vector<Functional<HmmParticle>> fs;
        for (const auto& s : c.functionals) fs.push_back(hmm_functional(s, h.states()));
        return replicate_report(c, make_hmm_model(h), fs, threads);
    }
    if (type == "linear_gaussian") {
        const LinearGaussianSSM g = build_linear_gaussian(c.model);
        std::vector<Functional<double>> fs;
        for (const auto& s : c.functionals) fs.push_back(real_functional(s, "x"));
        return replicate_report(c, make_gaussian_model(g), fs, threads);
    }
    if (type == "beta_bernoulli") {
        const BetaBernoulliModel b = build_beta_bernoulli(c.model);
        const bool move = c.model.value("resample_move", false);
        std::vector<Functional<double>> fs;
        for (const auto& s : c.functionals) fs.push_back(real_functional(s, "theta"));
        return replicate_report(c, make_beta_bernoulli_model(b, move), fs, threads);
    }
    if (type == "marginal_pair") {
        const MarginalPairModel p = build_marginal_pair(c.model);
        if (c.model.value("marginal", false)) {
            std::vector<Functional<int>> fs;
            for (const auto& s : c.functionals) {
                const Eigen::VectorXd table = pair_table(s, p.xi_states());
                std::vector<double> values(table.data(), table.data() + table.size());
                fs.push_back(scalar_functional<int>(s.name(), [values](int xi) { return values[xi]; }));
            }
            return replicate_report(c, make_pair_marginal_model(p), fs, threads);
        }
        std::vector<Functional<PairState>> fs;
        for (const auto& s : c.functionals) fs.push_back(pair_functional(s, p.xi_states()));
        return replicate_report(c, make_pair_joint_model(p), fs, threads);
    }
    throw ConfigError("unknown model type '" + type + "'");
}

ExperimentResult clt_check(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    if (model_type(c) != "finite_hmm") {
        throw ConfigError("clt-check needs exact asymptotic variances; use a finite_hmm model");
    }
    const FiniteHMM h = build_finite_hmm(c.model);
    const std::size_t steps = c.filter.steps;
    const ModelSpec<HmmParticle> model = make_hmm_model(h);
    std::vector<Functional<HmmParticle>> fs;
    for (const auto& s : c.functionals) fs.push_back(hmm_functional(s, h.states()));

    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.passed = true;
    r.metrics["H"] = c.filter.particles;
    r.metrics["T"] = steps;
    r.metrics["M"] = c.filter.trials;
    ojson checks = ojson::array();
    const auto particles = static_cast<double>(c.filter.particles);
    for (std::size_t si = 0; si < c.filter.schemes.size(); ++si) {
        const SelectionScheme scheme = c.filter.schemes[si];
        const TrialValues tv =
            run_trials(model, c, scheme, static_cast<std::uint64_t>(si) * c.filter.trials, fs, threads);
        for (std::size_t f = 0; f < fs.size(); ++f) {
            const Eigen::MatrixXd table = hmm_functional_table(c.functionals[f], h.states());
            const FiniteFlow flow = hmm_flow_for(h, steps, c.functionals[f]);
            const VarianceReport rep = recursion_variances(flow, hmm_phis(flow, c.functionals[f], table), scheme);
            for (std::size_t t = 0; t <= steps; ++t) {
                const double oracle = (*model.exact_mean(t, fs[f]))[0];
                const bool last = t == steps;
                const std::string sname = scheme_name(scheme);
                CltVerdict pre = clt_rows(r, column(tv.pre, t, f), oracle, rep.rows[t].v(0, 0), particles, t,
                                          fs[f].name + ":pre_selection", sname, last);
                CltVerdict post = clt_rows(r, column(tv.post, t, f), oracle, rep.rows[t].hat(0, 0), particles, t,
                                           fs[f].name + ":post_selection", sname, last);
                if (last) {
                    pre.metrics["functional"] = fs[f].name;
                    pre.metrics["scheme"] = sname;
                    pre.metrics["estimator"] = "pre_selection";
                    post.metrics["functional"] = fs[f].name;
                    post.metrics["scheme"] = sname;
                    post.metrics["estimator"] = "post_selection";
                    r.passed = r.passed && pre.passed && post.passed;
                    checks.push_back(std::move(pre.metrics));
                    checks.push_back(std::move(post.metrics));
                }
            }
        }
    }
    r.metrics["checks"] = std::move(checks);
    return r;
}

ExperimentResult rate_fit(const ExperimentConfig& c, std::optional<std::size_t>) {
    require_model(c, "beta_bernoulli");
    const BetaBernoulliModel b = build_beta_bernoulli(c.model);
    if (c.functionals.size() != 1) throw ConfigError("rate-fit takes exactly one functional");
    const Functional<double> phi_f = real_functional(c.functionals.front(), "theta");
    std::function<double(double)> phi = [phi_f](double x) {
        double v = 0.0;
        phi_f.evaluate(x, std::span<double>(&v, 1));
        return v;
    };
    const double lo = extra_double(c, "grid_min", 100.0);
    const double hi = extra_double(c, "grid_max", 10000.0);
    const std::size_t points = extra_size(c, "grid_points", 13);
    const double tol = extra_double(c, "slope_tolerance", 0.1);
    if (!(lo >= 1.0) || !(hi > lo) || points < 3) throw ConfigError("rate-fit grid needs 1 <= min < max, >= 3 points");
    if (hi > static_cast<double>(b.horizon())) throw ConfigError("rate-fit grid extends beyond the data");
    std::vector<double> grid;
    for (std::size_t i = 0; i < points; ++i) {
        const double g = std::round(std::exp(std::log(lo) + static_cast<double>(i) / static_cast<double>(points - 1) *
                                                                 std::log(hi / lo)));
        if (grid.empty() || g > grid.back()) grid.push_back(g);
    }

    const BetaBernoulliVariance var(b, phi);
    std::vector<FixedParameterVariances> values;
    for (double t : grid) values.push_back(var.at(static_cast<std::size_t>(t)));

    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.passed = true;
    r.metrics["grid"] = grid;
    bool ordered = true;
    for (const auto& v : values) ordered = ordered && v.sis < v.residual && v.residual <= v.multinomial;
    r.metrics["ordering_sis_lt_residual_le_multinomial"] = ordered;
    ojson fits = ojson::array();
    for (SelectionScheme s : c.filter.schemes) {
        std::vector<double> ys;
        for (const auto& v : values) {
            ys.push_back(s == SelectionScheme::none          ? v.sis
                         : s == SelectionScheme::multinomial ? v.multinomial
                         : s == SelectionScheme::residual    ? v.residual
                                                             : throw ConfigError("rate-fit has no systematic theory"));
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            r.rows.push_back({static_cast<std::size_t>(grid[i]), "asymptotic_variance", scheme_name(s), ys[i],
                              std::nullopt, std::nullopt, std::nullopt, 0});
        }
        const SlopeFit fit = fit_loglog_slope(grid, ys);
        const double expected = s == SelectionScheme::none ? -0.5 : 0.5;
        const bool ok = std::abs(fit.slope - expected) <= tol;
        ojson m;
        m["scheme"] = scheme_name(s);
        m["slope"] = fit.slope;
        m["slope_half_width"] = fit.slope_half_width;
        m["intercept"] = fit.intercept;
        m["residual_se"] = fit.residual_se;
        m["expected_slope"] = expected;
        m["tolerance"] = tol;
        m["passed"] = ok;
        r.passed = r.passed && ok;
        fits.push_back(std::move(m));
    }
    r.metrics["fits"] = std::move(fits);
    return r;
}

ExperimentResult stability(const ExperimentConfig& c, std::optional<std::size_t>) {
    require_model(c, "finite_hmm");
    const FiniteHMM h = build_finite_hmm(c.model);
    const std::size_t steps = c.filter.steps;
    const FunctionalSpec& spec = c.functionals.front();
    if (reads_first(spec)) throw ConfigError("stability takes a functional of the current state");
    const Eigen::MatrixXd table = hmm_functional_table(spec, h.states());
    const StabilityParams params = stability_params(h, variation(table.col(0)));

    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.metrics["C"] = params.kernel_ratio;
    r.metrics["f_low"] = params.f_low;
    r.metrics["f_high"] = params.f_high;
    r.metrics["rho"] = params.rho();
    r.metrics["rho2"] = params.rho2();
    r.metrics["variation"] = params.variation;

    const FiniteFlow flow = hmm_filtering_flow(h, steps);
    const VarianceReport rep = recursion_variances(flow, hmm_phis(flow, spec, table), SelectionScheme::multinomial);
    bool bounded = true;
    double max_v = 0.0, max_diff = 0.0, first_half = 0.0, second_half = 0.0;
    for (std::size_t t = 1; t <= steps; ++t) {
        const double v = hmm_closed_form_variance(h, table, t)(0, 0);
        max_diff = std::max(max_diff, std::abs(v - rep.rows[t].v(0, 0)));
        const double bound = stability_bound(params, t);
        bounded = bounded && v <= bound;
        max_v = std::max(max_v, v);
        if (2 * t <= steps) {
            first_half = std::max(first_half, v);
        } else {
            second_half = std::max(second_half, v);
        }
        r.rows.push_back({t, "filter_variance", "multinomial", v, std::nullopt, std::nullopt, std::nullopt, 0});
        r.rows.push_back({t, "stability_bound", "multinomial", bound, std::nullopt, std::nullopt, std::nullopt, 0});
    }
    const double plateau = first_half > 0.0 ? second_half / first_half : 1.0;
    const double plateau_factor = extra_double(c, "plateau_factor", 1.05);
    r.metrics["max_variance"] = max_v;
    r.metrics["bound_limit"] = stability_bound_limit(params);
    r.metrics["bounded"] = bounded;
    r.metrics["recursion_closed_form_max_diff"] = max_diff;
    r.metrics["plateau_ratio"] = plateau;
    r.metrics["plateau_ok"] = plateau <= plateau_factor;

    // Contraction of the exact posterior kernels and of the weight cascade.
    const std::size_t lemma_steps = std::min(extra_size(c, "lemma_steps", 20), steps);
    bool contraction = true, cascade = true;
    double worst_contraction = 0.0, worst_cascade = 0.0;
    for (std::size_t t = 1; t <= lemma_steps; ++t) {
        const auto h_cascade = hmm_weight_cascade(h, table, t);
        for (std::size_t k = 0; k < t; ++k) {
            const double d = dobrushin_coefficient(posterior_conditional(h, t, k));
            const double limit = std::pow(params.rho2(), static_cast<double>(t - k));
            contraction = contraction && d <= limit + 1e-12;
            worst_contraction = std::max(worst_contraction, d / limit);
            const double dv = variation(h_cascade[k].col(0));
            const double cb = cascade_variation_bound(params, t, k);
            cascade = cascade && dv <= cb * (1.0 + 1e-12);
            if (cb > 0.0) worst_cascade = std::max(worst_cascade, dv / cb);
        }
    }
    r.metrics["contraction_holds"] = contraction;
    r.metrics["contraction_worst_ratio"] = worst_contraction;
    r.metrics["cascade_bound_holds"] = cascade;
    r.metrics["cascade_worst_ratio"] = worst_cascade;

    // Smoothing contrast: phi(x_1) degrades as t grows.
    const std::size_t smooth = std::min(extra_size(c, "smoothing_steps", 50), steps);
    FunctionalSpec first_spec = spec;
    first_spec.position = "first";
    const FiniteFlow aflow = hmm_anchored_flow(h, smooth, 1);
    const auto aphis = hmm_phis(aflow, first_spec, table);
    const VarianceReport smult = recursion_variances(aflow, aphis, SelectionScheme::multinomial);
    const VarianceReport sres = recursion_variances(aflow, aphis, SelectionScheme::residual);
    bool monotone = true, ordered = true;
    for (std::size_t t = 1; t <= smooth; ++t) {
        const double v = smult.rows[t].v(0, 0);
        const double vr = sres.rows[t].v(0, 0);
        const double vs = sis_variance(aflow, aphis[t], t)(0, 0);
        r.rows.push_back({t, "smoothing_variance", "multinomial", v, std::nullopt, std::nullopt, std::nullopt, 0});
        r.rows.push_back({t, "smoothing_variance", "residual", vr, std::nullopt, std::nullopt, std::nullopt, 0});
        r.rows.push_back({t, "smoothing_variance", "none", vs, std::nullopt, std::nullopt, std::nullopt, 0});
        if (t >= 3) monotone = monotone && v >= smult.rows[t - 1].v(0, 0) * (1.0 - 1e-12);
        if (t >= 2) ordered = ordered && v >= vr - kExactTolerance && vr > vs + kExactTolerance;
    }
    r.metrics["smoothing_nondecreasing"] = monotone;
    r.metrics["smoothing_ordering"] = ordered;
    r.passed = bounded && plateau <= plateau_factor && contraction && max_diff <= kExactTolerance * std::max(1.0, max_v);
    return r;
}

ExperimentResult compare_schemes(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    require_model(c, "finite_hmm");
    const FiniteHMM h = build_finite_hmm(c.model);
    const std::size_t steps = c.filter.steps;
    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.passed = true;
    ojson per_functional = ojson::array();
    std::vector<Functional<HmmParticle>> fs;
    for (const auto& spec : c.functionals) fs.push_back(hmm_functional(spec, h.states()));
    std::vector<std::vector<double>> exact_final(fs.size(), std::vector<double>(2));

    for (std::size_t f = 0; f < fs.size(); ++f) {
        const FunctionalSpec& spec = c.functionals[f];
        const Eigen::MatrixXd table = hmm_functional_table(spec, h.states());
        const FiniteFlow flow = hmm_flow_for(h, steps, spec);
        const auto phis = hmm_phis(flow, spec, table);
        const VarianceReport mult = recursion_variances(flow, phis, SelectionScheme::multinomial);
        const VarianceReport res = recursion_variances(flow, phis, SelectionScheme::residual);
        double max_gap = -INFINITY, max_mismatch = 0.0;
        for (std::size_t t = 0; t <= steps; ++t) {
            const Eigen::MatrixXd gap =
                reads_first(spec) ? residual_gap(flow, phis[t], t) : hmm_residual_gap(h, table, t);
            const Eigen::MatrixXd diff = res.rows[t].v - mult.rows[t].v;
            max_gap = std::max(max_gap, -min_eigenvalue(-gap));
            max_mismatch = std::max(max_mismatch, (gap - diff).cwiseAbs().maxCoeff());
            const std::string est = fs[f].name;
            r.rows.push_back({t, est + ":asymptotic_variance", "multinomial", mult.rows[t].v(0, 0), std::nullopt,
                              std::nullopt, std::nullopt, 0});
            r.rows.push_back({t, est + ":asymptotic_variance", "residual", res.rows[t].v(0, 0), std::nullopt,
                              std::nullopt, std::nullopt, 0});
            r.rows.push_back({t, est + ":residual_gap", "residual-multinomial", gap(0, 0), std::nullopt, std::nullopt,
                              std::nullopt, 0});
        }
        exact_final[f] = {mult.rows[steps].v(0, 0), res.rows[steps].v(0, 0)};
        const bool ok = max_gap <= kExactTolerance && max_mismatch <= kExactTolerance;
        ojson m;
        m["functional"] = fs[f].name;
        m["max_gap_eigenvalue"] = max_gap;
        m["gap_vs_difference_max_abs"] = max_mismatch;
        m["passed"] = ok;
        r.passed = r.passed && ok;
        per_functional.push_back(std::move(m));
    }
    r.metrics["exact"] = std::move(per_functional);

    if (c.filter.trials >= 2) {
        const ModelSpec<HmmParticle> model = make_hmm_model(h);
        const TrialValues tm = run_trials(model, c, SelectionScheme::multinomial, 0, fs, threads);
        const TrialValues tr = run_trials(model, c, SelectionScheme::residual, c.filter.trials, fs, threads);
        const auto particles = static_cast<double>(c.filter.particles);
        const auto dof = static_cast<double>(c.filter.trials - 1);
        ojson emp = ojson::array();
        for (std::size_t f = 0; f < fs.size(); ++f) {
            const double sm = particles * sample_variance(column(tm.pre, steps, f));
            const double sr = particles * sample_variance(column(tr.pre, steps, f));
            const auto cm = variance_interval(sm, dof);
            const auto cr = variance_interval(sr, dof);
            r.rows.push_back({steps, fs[f].name + ":replicate_variance", "multinomial", exact_final[f][0], sm,
                              cm.first, cm.second, c.filter.trials});
            r.rows.push_back({steps, fs[f].name + ":replicate_variance", "residual", exact_final[f][1], sr, cr.first,
                              cr.second, c.filter.trials});
            const double ratio = sm > 0.0 ? sr / sm : (sr == 0.0 ? 1.0 : INFINITY);
            const double critical = f_quantile(dof, dof, 0.95);
            const bool ok = ratio <= critical;
            ojson m;
            m["functional"] = fs[f].name;
            m["multinomial"] = sm;
            m["residual"] = sr;
            m["ratio_residual_over_multinomial"] = ratio;
            m["f_critical_95"] = critical;
            m["residual_not_worse"] = ok;
            r.passed = r.passed && ok;
            emp.push_back(std::move(m));
        }
        r.metrics["empirical"] = std::move(emp);
    }
    return r;
}

ExperimentResult rb_compare(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    require_model(c, "marginal_pair");
    const MarginalPairModel p = build_marginal_pair(c.model);
    const std::size_t steps = std::min(c.filter.steps, p.horizon());
    const FiniteFlow joint = pair_joint_flow(p);
    const FiniteFlow marginal = pair_marginal_flow(p);
    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    r.passed = true;
    bool exact_so_far = true;
    std::vector<bool> exact_through(steps + 1);
    for (std::size_t t = 0; t <= steps; ++t) {
        exact_so_far = exact_so_far && p.conditional_is_exact(t);
        exact_through[t] = exact_so_far;
    }
    r.metrics["conditional_exact"] = exact_so_far;
    ojson checks = ojson::array();
    std::vector<Functional<PairState>> fs;
    for (const auto& spec : c.functionals) fs.push_back(pair_functional(spec, p.xi_states()));
    for (std::size_t f = 0; f < fs.size(); ++f) {
        const Eigen::VectorXd table = pair_table(c.functionals[f], p.xi_states());
        const bool constant = variation(table) == 0.0;
        const auto jphis = pair_phis(joint, table);
        const auto mphis = pair_phis(marginal, table);
        for (SelectionScheme s : {SelectionScheme::multinomial, SelectionScheme::residual}) {
            const VarianceReport jr = recursion_variances(joint, jphis, s);
            const VarianceReport mr = recursion_variances(marginal, mphis, s);
            bool dominated = true, relation = true;
            double min_gap = INFINITY, max_abs_gap = 0.0;
            for (std::size_t t = 0; t <= steps; ++t) {
                const double vj = jr.rows[t].v(0, 0);
                const double vm = mr.rows[t].v(0, 0);
                const double gap = vj - vm;
                min_gap = std::min(min_gap, gap);
                max_abs_gap = std::max(max_abs_gap, std::abs(gap));
                dominated = dominated && gap >= -kExactTolerance;
                const bool expect_equal = exact_through[t] || constant;
                relation = relation && (expect_equal ? std::abs(gap) <= kExactTolerance : gap > kExactTolerance);
                r.rows.push_back({t, fs[f].name + ":joint", scheme_name(s), vj, std::nullopt, std::nullopt,
                                  std::nullopt, 0});
                r.rows.push_back({t, fs[f].name + ":marginal", scheme_name(s), vm, std::nullopt, std::nullopt,
                                  std::nullopt, 0});
            }
            ojson m;
            m["functional"] = fs[f].name;
            m["scheme"] = scheme_name(s);
            m["marginal_le_joint"] = dominated;
            m["min_gap"] = min_gap;
            m["max_abs_gap"] = max_abs_gap;
            m["expected_relation"] = exact_so_far || constant ? "equal" : "strict";
            m["relation_holds"] = relation;
            r.passed = r.passed && dominated && relation;
            checks.push_back(std::move(m));
        }
    }
    r.metrics["exact"] = std::move(checks);

    if (c.filter.trials >= 2) {
        const ModelSpec<PairState> jm = make_pair_joint_model(p);
        const ModelSpec<int> mm = make_pair_marginal_model(p);
        const auto pairing = pair_embedding();
        ojson emp = ojson::array();
        for (std::size_t si = 0; si < c.filter.schemes.size(); ++si) {
            const SelectionScheme s = c.filter.schemes[si];
            ExperimentConfig cc = c;
            cc.filter.steps = steps;
            std::vector<std::vector<double>> jv(c.filter.trials), mv(c.filter.trials);
            parallel_for(c.filter.trials, resolve_threads(threads), [&](std::size_t m) {
                const auto cfg =
                    filter_config(cc, s, 2 * (static_cast<std::uint64_t>(si) * c.filter.trials + m), fs);
                const MarginalPairTraces tr = run_marginal_pair(jm, mm, pairing, cfg);
                for (std::size_t f = 0; f < fs.size(); ++f) {
                    jv[m].push_back(tr.joint.steps.back().weighted[f][0]);
                    mv[m].push_back(tr.marginal.steps.back().weighted[f][0]);
                }
            });
            const auto particles = static_cast<double>(c.filter.particles);
            const auto dof = static_cast<double>(c.filter.trials - 1);
            for (std::size_t f = 0; f < fs.size(); ++f) {
                std::vector<double> a, b;
                for (std::size_t m = 0; m < c.filter.trials; ++m) {
                    a.push_back(jv[m][f]);
                    b.push_back(mv[m][f]);
                }
                const double sj = particles * sample_variance(a);
                const double sm = particles * sample_variance(b);
                const auto cj = variance_interval(sj, dof);
                const auto cm = variance_interval(sm, dof);
                r.rows.push_back({steps, fs[f].name + ":joint_replicate_variance", scheme_name(s), std::nullopt, sj,
                                  cj.first, cj.second, c.filter.trials});
                r.rows.push_back({steps, fs[f].name + ":marginal_replicate_variance", scheme_name(s), std::nullopt,
                                  sm, cm.first, cm.second, c.filter.trials});
                ojson m;
                m["functional"] = fs[f].name;
                m["scheme"] = scheme_name(s);
                m["joint"] = sj;
                m["marginal"] = sm;
                emp.push_back(std::move(m));
            }
        }
        r.metrics["empirical"] = std::move(emp);
    }
    return r;
}

namespace {

template <typename State>
std::vector<std::vector<double>> log_ratio_paths(const ModelSpec<State>& model, const ExperimentConfig& c,
                                                 std::optional<std::size_t> threads) {
    const std::size_t steps = c.filter.steps;
    if (model.horizon < steps) throw ConfigError("model has fewer observations than T");
    std::vector<std::vector<double>> out(c.filter.trials);
    parallel_for(c.filter.trials, resolve_threads(threads), [&](std::size_t m) {
        RngStream rng(c.seed, m);
        std::vector<State> pair = {model.sample_initial(rng), model.sample_initial(rng)};
        double l0 = model.log_weight(0, pair[0], nullptr);
        double l1 = model.log_weight(0, pair[1], nullptr);
        auto& d = out[m];
        d.push_back(l0 - l1);
        for (std::size_t t = 1; t <= steps; ++t) {
            const MutationKernel<State> kernel = model.kernel_for_step(t, pair);
            State a = kernel(pair[0], rng);
            State b = kernel(pair[1], rng);
            l0 += model.log_weight(t, a, &pair[0]);
            l1 += model.log_weight(t, b, &pair[1]);
            if (!std::isfinite(l0) || !std::isfinite(l1)) throw Error("non-finite weight at t=" + std::to_string(t));
            pair = {std::move(a), std::move(b)};
            d.push_back(l0 - l1);
        }
    });
    return out;
}

template <typename State>
ExperimentResult degeneracy_report(const ExperimentConfig& c, const ModelSpec<State>& model,
                                   const std::vector<Functional<State>>& fs, std::optional<std::size_t> threads) {
    const std::size_t steps = c.filter.steps;
    const auto paths = log_ratio_paths(model, c, threads);
    ExperimentResult r;
    r.experiment = c.experiment;
    r.seed = c.seed;
    std::vector<double> ts, vs;
    const std::size_t fit_min = extra_size(c, "fit_min", 10);
    const std::size_t fit_max = std::min(extra_size(c, "fit_max", steps), steps);
    if (fit_max < fit_min + 2) throw ConfigError("weight-degeneracy fit window needs at least 3 steps");
    for (std::size_t t = 0; t <= steps; ++t) {
        std::vector<double> col;
        for (const auto& p : paths) col.push_back(p[t]);
        const double v = sample_variance(col);
        r.rows.push_back({t, "log_weight_ratio_variance", "none", std::nullopt, v, std::nullopt, std::nullopt,
                          c.filter.trials});
        if (t >= fit_min && t <= fit_max) {
            ts.push_back(static_cast<double>(t));
            vs.push_back(v);
        }
    }
    const LinearFit fit = fit_linear(ts, vs);
    const double r2_min = extra_double(c, "r_squared_min", 0.95);
    r.metrics["pairs"] = c.filter.trials;
    r.metrics["fit_window"] = ojson::array({fit_min, fit_max});
    r.metrics["slope"] = fit.slope;
    r.metrics["intercept"] = fit.intercept;
    r.metrics["r_squared"] = fit.r_squared;
    r.metrics["r_squared_min"] = r2_min;
    r.passed = fit.r_squared > r2_min;

    // Full SIS run for the weight concentration trajectory.
    const FilterTrace trace =
        run_sis(model, filter_config(c, SelectionScheme::none, c.filter.trials, fs));
    std::optional<std::size_t> first_dominant;
    for (const StepRecord& rec : trace.steps) {
        r.rows.push_back({rec.t, "max_normalized_weight", "none", std::nullopt, rec.max_normalized_weight,
                          std::nullopt, std::nullopt, 1});
        if (!first_dominant && rec.max_normalized_weight > 0.99) first_dominant = rec.t;
    }
    r.metrics["sis_particles"] = c.filter.particles;
    r.metrics["final_max_normalized_weight"] = trace.steps.back().max_normalized_weight;
    r.metrics["final_ess"] = trace.steps.back().ess;
    r.metrics["first_step_max_weight_above_0.99"] = first_dominant ? ojson(*first_dominant) : ojson(nullptr);
    return r;
}

}  // namespace

ExperimentResult weight_degeneracy(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    const std::string type = model_type(c);
    if (type == "finite_hmm") {
        const FiniteHMM h = build_finite_hmm(c.model);
        std::vector<Functional<HmmParticle>> fs;
        for (const auto& s : c.functionals) fs.push_back(hmm_functional(s, h.states()));
        return degeneracy_report(c, make_hmm_model(h), fs, threads);
    }
    if (type == "linear_gaussian") {
        const LinearGaussianSSM g = build_linear_gaussian(c.model);
        std::vector<Functional<double>> fs;
        for (const auto& s : c.functionals) fs.push_back(real_functional(s, "x"));
        return degeneracy_report(c, make_gaussian_model(g), fs, threads);
    }
    throw ConfigError("weight-degeneracy needs a state-space model (finite_hmm or linear_gaussian)");
}

ExperimentResult run_experiment(const ExperimentConfig& c, std::optional<std::size_t> threads) {
    validate_config(c);
    try {
        if (c.experiment == "run") return run_filters(c, threads);
        if (c.experiment == "clt-check") return clt_check(c, threads);
        if (c.experiment == "rate-fit") return rate_fit(c, threads);
        if (c.experiment == "stability") return stability(c, threads);
        if (c.experiment == "compare-schemes") return compare_schemes(c, threads);
        if (c.experiment == "rb-compare") return rb_compare(c, threads);
        if (c.experiment == "weight-degeneracy") return weight_degeneracy(c, threads);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace smc::harness

#include "smc/harness/config.hpp"

#include <algorithm>
#include <set>

namespace smc::harness {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kDefaultSeed = 20261018;

Eigen::VectorXd to_vector(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a nonempty array");
    Eigen::VectorXd out(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return out;
}

Eigen::MatrixXd to_matrix(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(what + " must be a nested array");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(what + " rows differ in length");
        for (std::size_t c = 0; c < cols; ++c) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return out;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

json hmm_preset(const std::string& preset, std::size_t steps) {
    return {{"type", "finite_hmm"}, {"preset", preset}, {"steps", steps}};
}

}  // namespace

std::string FunctionalSpec::name() const {
    if (type == "indicator") return (position == "first" ? "first_indicator_" : "indicator_") + std::to_string(state);
    if (type == "constant") return "constant";
    if (type == "identity") return "x";
    return type;
}

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {"run",         "clt-check",  "rate-fit",          "stability",
                                                   "compare-schemes", "rb-compare", "weight-degeneracy"};
    return kinds;
}

ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.seed = kDefaultSeed;
    FunctionalSpec indicator1;
    if (experiment == "run") {
        c.model = hmm_preset("two_state", 20);
        c.filter = {10000, 20, 30, 0, {SelectionScheme::multinomial}};
        c.functionals = {indicator1};
    } else if (experiment == "clt-check") {
        c.model = hmm_preset("two_state", 10);
        c.filter = {10000, 10, 0, 2000, {SelectionScheme::multinomial, SelectionScheme::residual}};
        c.functionals = {indicator1};
    } else if (experiment == "rate-fit") {
        c.model = {{"type", "beta_bernoulli"},
                   {"prior", {2.0, 2.0}},
                   {"instrumental", {1.0, 1.0}},
                   {"simulate", {{"steps", 10000}, {"theta", 0.3}, {"seed", 7}}}};
        c.filter = {0, 10000, 0, 0, {SelectionScheme::none, SelectionScheme::multinomial, SelectionScheme::residual}};
        c.functionals = {FunctionalSpec{"identity"}};
        c.extra = {{"grid_min", 100}, {"grid_max", 10000}, {"grid_points", 13}, {"slope_tolerance", 0.1}};
    } else if (experiment == "stability") {
        c.model = {{"type", "finite_hmm"}, {"preset", "three_state_stable"}, {"steps", 200}, {"data_seed", 11}};
        c.filter = {0, 200, 0, 0, {SelectionScheme::multinomial}};
        c.functionals = {FunctionalSpec{"indicator", 0}};
        c.extra = {{"lemma_steps", 20}, {"smoothing_steps", 50}, {"plateau_factor", 1.05}};
    } else if (experiment == "compare-schemes") {
        c.model = hmm_preset("two_state", 10);
        c.filter = {1000, 10, 0, 200, {SelectionScheme::multinomial, SelectionScheme::residual}};
        c.functionals = {indicator1};
    } else if (experiment == "rb-compare") {
        c.model = {{"type", "marginal_pair"}, {"preset", "example"}, {"conditional_exact", false},
                   {"steps", 10}, {"seed", 3}};
        c.filter = {1000, 10, 0, 200, {SelectionScheme::multinomial, SelectionScheme::residual}};
        c.functionals = {FunctionalSpec{"indicator", 0}};
    } else if (experiment == "weight-degeneracy") {
        c.model = hmm_preset("two_state", 200);
        c.filter = {1000, 200, 0, 2000, {SelectionScheme::none}};
        c.functionals = {indicator1};
        c.extra = {{"fit_min", 10}, {"fit_max", 200}, {"r_squared_min", 0.95}};
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    return c;
}

ExperimentConfig parse_config(const json& doc, const std::string& experiment) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> top = {"experiment", "model", "filter", "functionals", "output"};
    for (const auto& [key, _] : doc.items()) {
        if (!top.contains(key)) throw ConfigError("unknown top-level key '" + key + "'");
    }
    std::string kind = experiment;
    if (doc.contains("experiment")) {
        const auto declared = doc.at("experiment").get<std::string>();
        if (!kind.empty() && declared != kind) {
            throw ConfigError("config is for '" + declared + "', not '" + kind + "'");
        }
        kind = declared;
    }
    if (kind.empty()) throw ConfigError("no experiment given");
    ExperimentConfig c = default_config(kind);
    try {
        if (doc.contains("model")) c.model = doc.at("model");
        if (doc.contains("filter")) {
            const json& f = doc.at("filter");
            if (!f.is_object()) throw ConfigError("filter must be an object");
            for (const auto& [key, value] : f.items()) {
                if (key == "H") c.filter.particles = value.get<std::size_t>();
                else if (key == "T") c.filter.steps = value.get<std::size_t>();
                else if (key == "k") c.filter.replicates = value.get<std::size_t>();
                else if (key == "M") c.filter.trials = value.get<std::size_t>();
                else if (key == "seed") c.seed = value.get<std::uint64_t>();
                else if (key == "scheme") c.filter.schemes = {parse_scheme(value.get<std::string>())};
                else if (key == "schemes") {
                    c.filter.schemes.clear();
                    for (const auto& s : value) c.filter.schemes.push_back(parse_scheme(s.get<std::string>()));
                } else {
                    c.extra[key] = value;
                }
            }
        }
        if (doc.contains("functionals")) {
            c.functionals.clear();
            for (const auto& f : doc.at("functionals")) {
                FunctionalSpec s;
                s.type = get_or<std::string>(f, "type", "indicator");
                s.state = get_or<int>(f, "state", 1);
                s.value = get_or<double>(f, "value", 0.0);
                s.position = get_or<std::string>(f, "position", "current");
                c.functionals.push_back(s);
            }
        }
        if (doc.contains("output")) {
            const json& o = doc.at("output");
            c.out_dir = get_or<std::string>(o, "dir", c.out_dir);
            c.format = get_or<std::string>(o, "format", c.format);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    validate_config(c);
    return c;
}

void validate_config(const ExperimentConfig& c) {
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end()) {
        throw ConfigError("unknown experiment '" + c.experiment + "'");
    }
    if (c.format != "csv" && c.format != "json") throw ConfigError("format must be csv or json");
    if (c.functionals.empty()) throw ConfigError("at least one functional is required");
    if (c.filter.schemes.empty()) throw ConfigError("at least one scheme is required");
    const auto& e = c.experiment;
    const bool simulates = e == "run" || e == "clt-check" || e == "weight-degeneracy" ||
                           ((e == "compare-schemes" || e == "rb-compare") && c.filter.trials > 0);
    if (simulates && c.filter.particles < 10) throw ConfigError("H must be at least 10");
    if (e == "run" && c.filter.replicates < 2) throw ConfigError("k must be at least 2");
    if (e == "run" && c.filter.schemes.size() != 1) throw ConfigError("run takes exactly one scheme");
    if ((e == "clt-check" || e == "weight-degeneracy") && c.filter.trials < 2) {
        throw ConfigError("M must be at least 2");
    }
    if ((e == "compare-schemes" || e == "rb-compare") && c.filter.trials == 1) {
        throw ConfigError("M must be 0 (exact only) or at least 2");
    }
    if (e == "clt-check") {
        for (auto s : c.filter.schemes) {
            if (s != SelectionScheme::multinomial && s != SelectionScheme::residual) {
                throw ConfigError("clt-check supports multinomial and residual schemes only");
            }
        }
    }
    if (!c.model.is_object() || !c.model.contains("type")) throw ConfigError("model needs a type");
    const json& type = c.model.at("type");
    if (!type.is_string()) throw ConfigError("model type must be a string");
    try {
        if (type == "finite_hmm") build_finite_hmm(c.model);
        else if (type == "linear_gaussian") build_linear_gaussian(c.model);
        else if (type == "beta_bernoulli") build_beta_bernoulli(c.model);
        else if (type == "marginal_pair") build_marginal_pair(c.model);
        else throw ConfigError("unknown model type '" + type.get<std::string>() + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid model: ") + e.what());
    }
}

FiniteHMM build_finite_hmm(const json& m) {
    try {
        if (m.contains("preset")) {
            const auto preset = m.at("preset").get<std::string>();
            const auto steps = get_or<std::size_t>(m, "steps", 10);
            if (preset == "two_state") return two_state_hmm(steps);
            if (preset == "three_state_stable") {
                return three_state_stable_hmm(steps, get_or<std::uint64_t>(m, "data_seed", 11));
            }
            throw ConfigError("unknown finite_hmm preset '" + preset + "'");
        }
        FiniteHMM h;
        h.initial = to_vector(m.at("initial"), "initial");
        h.transition = to_matrix(m.at("transition"), "transition");
        h.emission = to_matrix(m.at("emission"), "emission");
        h.proposal = m.contains("proposal") ? to_matrix(m.at("proposal"), "proposal") : h.transition;
        if (m.contains("observations")) {
            h.observations = m.at("observations").get<std::vector<int>>();
        } else if (m.contains("simulate")) {
            const json& s = m.at("simulate");
            RngStream rng(get_or<std::uint64_t>(s, "seed", 1), 0);
            h.validate();
            h.observations = simulate_hmm(h, s.at("steps").get<std::size_t>(), rng).observations;
        }
        h.validate();
        return h;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed finite_hmm model: ") + e.what());
    }
}

LinearGaussianSSM build_linear_gaussian(const json& m) {
    try {
        LinearGaussianSSM g;
        g.a = get_or<double>(m, "a", g.a);
        g.sigma = get_or<double>(m, "sigma", g.sigma);
        g.tau = get_or<double>(m, "tau", g.tau);
        g.initial_mean = get_or<double>(m, "initial_mean", g.initial_mean);
        g.initial_sd = get_or<double>(m, "initial_sd", g.initial_sd);
        if (m.contains("observations")) {
            g.observations = m.at("observations").get<std::vector<double>>();
        } else {
            const json s = m.contains("simulate") ? m.at("simulate") : json::object();
            RngStream rng(get_or<std::uint64_t>(s, "seed", 1), 0);
            g.observations = simulate_gaussian(g, get_or<std::size_t>(s, "steps", 20), rng).observations;
        }
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed linear_gaussian model: ") + e.what());
    }
}

BetaBernoulliModel build_beta_bernoulli(const json& m) {
    try {
        BetaBernoulliModel b;
        if (m.contains("prior")) {
            const auto p = m.at("prior").get<std::vector<double>>();
            b.prior = {p.at(0), p.at(1)};
        }
        if (m.contains("instrumental")) {
            const auto p = m.at("instrumental").get<std::vector<double>>();
            b.instrumental = {p.at(0), p.at(1)};
        }
        if (m.contains("observations")) {
            b.observations = m.at("observations").get<std::vector<int>>();
            b.validate();
            return b;
        }
        const json s = m.contains("simulate") ? m.at("simulate") : json::object();
        BetaBernoulliModel generated = default_beta_bernoulli(get_or<std::size_t>(s, "steps", 10000),
                                                              get_or<double>(s, "theta", 0.3),
                                                              get_or<std::uint64_t>(s, "seed", 7));
        b.observations = std::move(generated.observations);
        if (has_integral_weight(b, get_or<double>(s, "theta", 0.3))) {
            throw ConfigError("simulated data give an integral weight at theta; change the seed");
        }
        b.validate();
        return b;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed beta_bernoulli model: ") + e.what());
    }
}

MarginalPairModel build_marginal_pair(const json& m) {
    try {
        if (get_or<std::string>(m, "preset", "") == "example") {
            return example_marginal_pair(get_or<bool>(m, "conditional_exact", false),
                                         get_or<std::size_t>(m, "steps", 10), get_or<std::uint64_t>(m, "seed", 3));
        }
        MarginalPairModel p;
        p.initial_marginal = to_vector(m.at("initial_marginal"), "initial_marginal");
        p.marginal_kernel = to_matrix(m.at("marginal_kernel"), "marginal_kernel");
        p.conditional_proposal = to_matrix(m.at("conditional_proposal"), "conditional_proposal");
        for (const auto& l : m.at("likelihoods")) p.likelihoods.push_back(to_matrix(l, "likelihood"));
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed marginal_pair model: ") + e.what());
    }
}

Eigen::MatrixXd hmm_functional_table(const FunctionalSpec& spec, std::size_t states) {
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states), 1);
    if (spec.type == "indicator") {
        if (spec.state < 0 || static_cast<std::size_t>(spec.state) >= states) {
            throw ConfigError("indicator state outside the state set");
        }
        phi(spec.state, 0) = 1.0;
    } else if (spec.type == "state") {
        for (Eigen::Index i = 0; i < phi.rows(); ++i) phi(i, 0) = static_cast<double>(i);
    } else if (spec.type == "constant") {
        phi.setConstant(spec.value);
    } else {
        throw ConfigError("functional type '" + spec.type + "' is not defined on HMM states");
    }
    return phi;
}

}  // namespace smc::harness

#include "smc/models/marginal_pair.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "smc/error.hpp"
#include "smc/rng.hpp"

namespace smc {

namespace {

void check_rows(const Eigen::MatrixXd& k, const std::string& what) {
    for (Eigen::Index r = 0; r < k.rows(); ++r) {
        if ((k.row(r).array() < 0.0).any() || std::abs(k.row(r).sum() - 1.0) > 1e-12) {
            throw Error(what + " row " + std::to_string(r) + " is not a probability vector");
        }
    }
}

std::vector<double> cdf(const Eigen::VectorXd& p) {
    std::vector<double> out(static_cast<std::size_t>(p.size()));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = acc += p(i);
    return out;
}

struct PairTables {
    std::vector<double> initial;
    std::vector<std::vector<double>> kernel;
    std::vector<std::vector<double>> conditional;
    std::vector<Eigen::MatrixXd> log_joint;     // log L_t
    std::vector<Eigen::VectorXd> log_marginal;  // log sum_lambda pc L_t
};

std::shared_ptr<const PairTables> build_tables(const MarginalPairModel& model) {
    model.validate();
    auto out = std::make_shared<PairTables>();
    out->initial = cdf(model.initial_marginal);
    for (Eigen::Index r = 0; r < model.marginal_kernel.rows(); ++r) {
        out->kernel.push_back(cdf(model.marginal_kernel.row(r).transpose()));
        out->conditional.push_back(cdf(model.conditional_proposal.row(r).transpose()));
    }
    for (std::size_t t = 0; t <= model.horizon(); ++t) {
        out->log_joint.push_back(model.likelihoods[t].array().log().matrix());
        out->log_marginal.push_back(model.marginal_weight(t).array().log().matrix());
    }
    return out;
}

}  // namespace

void MarginalPairModel::validate() const {
    const auto n = initial_marginal.size();
    if (n == 0 || conditional_proposal.cols() == 0) throw Error("pair model needs nonempty state sets");
    if (marginal_kernel.rows() != n || marginal_kernel.cols() != n) throw Error("marginal kernel must be n_xi x n_xi");
    if (conditional_proposal.rows() != n) throw Error("conditional proposal must have n_xi rows");
    if ((initial_marginal.array() < 0.0).any() || std::abs(initial_marginal.sum() - 1.0) > 1e-12) {
        throw Error("initial marginal must be a probability vector");
    }
    check_rows(marginal_kernel, "marginal kernel");
    check_rows(conditional_proposal, "conditional proposal");
    if (likelihoods.empty()) throw Error("pair model needs a likelihood for t = 0");
    for (const auto& l : likelihoods) {
        if (l.rows() != n || l.cols() != conditional_proposal.cols()) throw Error("likelihood table has wrong shape");
        if ((l.array() < 0.0).any() || !l.allFinite()) throw Error("likelihood entries must be finite and >= 0");
    }
}

Eigen::VectorXd MarginalPairModel::marginal_weight(std::size_t t) const {
    return conditional_proposal.cwiseProduct(likelihoods.at(t)).rowwise().sum();
}

Eigen::MatrixXd MarginalPairModel::conditional_weight(std::size_t t) const {
    const Eigen::VectorXd norm = marginal_weight(t);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(likelihoods.at(t).rows(), likelihoods.at(t).cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        if (norm(r) > 0.0) out.row(r) = likelihoods[t].row(r) / norm(r);
    }
    return out;
}

bool MarginalPairModel::conditional_is_exact(std::size_t t) const {
    const Eigen::MatrixXd vc = conditional_weight(t);
    const Eigen::VectorXd norm = marginal_weight(t);
    for (Eigen::Index r = 0; r < vc.rows(); ++r) {
        if (norm(r) == 0.0) continue;
        for (Eigen::Index c = 0; c < vc.cols(); ++c) {
            if (conditional_proposal(r, c) > 0.0 && std::abs(vc(r, c) - 1.0) > 1e-12) return false;
        }
    }
    return true;
}

std::vector<Eigen::MatrixXd> pair_joint_targets(const MarginalPairModel& model) {
    model.validate();
    std::vector<Eigen::MatrixXd> out;
    Eigen::VectorXd xi_prop = model.initial_marginal;
    for (std::size_t t = 0; t <= model.horizon(); ++t) {
        Eigen::MatrixXd p = xi_prop.asDiagonal() * model.conditional_proposal;
        p = p.cwiseProduct(model.likelihoods[t]);
        const double z = p.sum();
        if (!(z > 0.0)) throw Error("impossible observation at t=" + std::to_string(t));
        out.push_back(p / z);
        xi_prop = model.marginal_kernel.transpose() * out.back().rowwise().sum();
    }
    return out;
}

ModelSpec<PairState> make_pair_joint_model(const MarginalPairModel& model) {
    auto tables = build_tables(model);
    auto targets = std::make_shared<const std::vector<Eigen::MatrixXd>>(pair_joint_targets(model));
    ModelSpec<PairState> spec;
    spec.name = "marginal_pair_joint";
    spec.horizon = model.horizon();
    spec.sample_initial = [tables](RngStream& rng) {
        const int xi = static_cast<int>(rng.categorical_cdf(tables->initial));
        const int lambda = static_cast<int>(rng.categorical_cdf(tables->conditional[static_cast<std::size_t>(xi)]));
        return PairState{xi, lambda};
    };
    spec.kernel_for_step = [tables](std::size_t, std::span<const PairState>) -> MutationKernel<PairState> {
        return [tables](const PairState& parent, RngStream& rng) {
            const int xi =
                static_cast<int>(rng.categorical_cdf(tables->kernel[static_cast<std::size_t>(parent.xi)]));
            const int lambda =
                static_cast<int>(rng.categorical_cdf(tables->conditional[static_cast<std::size_t>(xi)]));
            return PairState{xi, lambda};
        };
    };
    spec.log_weight = [tables](std::size_t t, const PairState& s, const PairState*) {
        return tables->log_joint[t](s.xi, s.lambda);
    };
    spec.exact_mean = [targets](std::size_t t, const Functional<PairState>& f) -> std::optional<Estimate> {
        const Eigen::MatrixXd& p = (*targets)[t];
        Estimate out(f.arity, 0.0);
        std::vector<double> value(f.arity);
        for (Eigen::Index a = 0; a < p.rows(); ++a) {
            for (Eigen::Index b = 0; b < p.cols(); ++b) {
                if (p(a, b) == 0.0) continue;
                f.evaluate(PairState{static_cast<int>(a), static_cast<int>(b)}, value);
                for (std::size_t c = 0; c < f.arity; ++c) out[c] += p(a, b) * value[c];
            }
        }
        return out;
    };
    return spec;
}

ModelSpec<int> make_pair_marginal_model(const MarginalPairModel& model) {
    auto tables = build_tables(model);
    auto targets = std::make_shared<const std::vector<Eigen::MatrixXd>>(pair_joint_targets(model));
    ModelSpec<int> spec;
    spec.name = "marginal_pair_marginal";
    spec.horizon = model.horizon();
    spec.sample_initial = [tables](RngStream& rng) { return static_cast<int>(rng.categorical_cdf(tables->initial)); };
    spec.kernel_for_step = [tables](std::size_t, std::span<const int>) -> MutationKernel<int> {
        return [tables](const int& xi, RngStream& rng) {
            return static_cast<int>(rng.categorical_cdf(tables->kernel[static_cast<std::size_t>(xi)]));
        };
    };
    spec.log_weight = [tables](std::size_t t, const int& xi, const int*) { return tables->log_marginal[t](xi); };
    spec.exact_mean = [targets](std::size_t t, const Functional<int>& f) -> std::optional<Estimate> {
        const Eigen::VectorXd p = (*targets)[t].rowwise().sum();
        Estimate out(f.arity, 0.0);
        std::vector<double> value(f.arity);
        for (Eigen::Index a = 0; a < p.size(); ++a) {
            if (p(a) == 0.0) continue;
            f.evaluate(static_cast<int>(a), value);
            for (std::size_t c = 0; c < f.arity; ++c) out[c] += p(a) * value[c];
        }
        return out;
    };
    return spec;
}

MarginalPairing<PairState, int> pair_embedding() {
    MarginalPairing<PairState, int> out;
    out.embed = [](const int& xi) { return PairState{xi, -1}; };
    out.kernels_compatible = true;
    return out;
}

MarginalPairModel example_marginal_pair(bool conditional_exact, std::size_t steps, std::uint64_t seed) {
    constexpr Eigen::Index nxi = 3;
    constexpr Eigen::Index nlambda = 2;
    RngStream rng(seed, 0);
    auto dirichlet_row = [&](Eigen::Index n) {
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) g(i) = rng.gamma(2.0);
        return Eigen::VectorXd(g / g.sum());
    };
    MarginalPairModel out;
    out.initial_marginal = dirichlet_row(nxi);
    out.marginal_kernel.resize(nxi, nxi);
    out.conditional_proposal.resize(nxi, nlambda);
    for (Eigen::Index r = 0; r < nxi; ++r) {
        out.marginal_kernel.row(r) = dirichlet_row(nxi).transpose();
        out.conditional_proposal.row(r) = dirichlet_row(nlambda).transpose();
    }
    for (std::size_t t = 0; t <= steps; ++t) {
        Eigen::MatrixXd l(nxi, nlambda);
        for (Eigen::Index r = 0; r < nxi; ++r) {
            const double base = 0.2 + 0.8 * rng.uniform();
            for (Eigen::Index c = 0; c < nlambda; ++c) l(r, c) = conditional_exact ? base : 0.2 + 0.8 * rng.uniform();
        }
        out.likelihoods.push_back(std::move(l));
    }
    out.validate();
    return out;
}

}  // namespace smc

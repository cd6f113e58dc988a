#include "smc/variance/flow.hpp"

#include <cmath>
#include <map>
#include <string>

#include "smc/error.hpp"

namespace smc {

Eigen::VectorXd FiniteFlow::proposal(std::size_t t) const {
    if (t == 0) return initial_proposal;
    return kernels.at(t).transpose() * targets.at(t - 1);
}

Eigen::VectorXd FiniteFlow::weight(std::size_t t) const {
    const Eigen::VectorXd prop = proposal(t);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(prop.size());
    for (Eigen::Index i = 0; i < prop.size(); ++i) {
        if (prop(i) > 0.0) v(i) = targets[t](i) / prop(i);
    }
    return v;
}

void FiniteFlow::validate() const {
    if (targets.empty()) throw Error("flow has no targets");
    if (initial_proposal.size() != targets[0].size()) throw Error("initial proposal size mismatch");
    if (kernels.size() != targets.size()) throw Error("flow needs one kernel slot per step");
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (std::abs(targets[t].sum() - 1.0) > 1e-10 || (targets[t].array() < 0.0).any()) {
            throw Error("flow target at t=" + std::to_string(t) + " is not a probability vector");
        }
        if (t > 0) {
            const auto& k = kernels[t];
            if (k.rows() != targets[t - 1].size() || k.cols() != targets[t].size()) {
                throw Error("kernel shape mismatch at t=" + std::to_string(t));
            }
            for (Eigen::Index r = 0; r < k.rows(); ++r) {
                if (std::abs(k.row(r).sum() - 1.0) > 1e-10) throw Error("kernel row does not sum to 1");
            }
        }
        const Eigen::VectorXd prop = proposal(t);
        for (Eigen::Index i = 0; i < prop.size(); ++i) {
            if (prop(i) == 0.0 && targets[t](i) > 0.0) {
                throw Error("target not absolutely continuous w.r.t. proposal at t=" + std::to_string(t));
            }
        }
    }
}

namespace {

// Expands the path posterior one step at a time, keeping only the positions
// selected by `keep(t, position)`; the last position is always kept.
template <typename Keep>
FiniteFlow build_hmm_flow(const FiniteHMM& model, std::size_t steps, Keep keep) {
    model.validate();
    const ForwardPass pass = finite_hmm_forward(model, steps);
    const auto m = static_cast<Eigen::Index>(model.states());
    FiniteFlow flow;
    flow.initial_proposal = model.initial;
    flow.targets.push_back(model.initial);
    flow.kernels.emplace_back();
    flow.coordinates.emplace_back();
    for (Eigen::Index a = 0; a < m; ++a) flow.coordinates[0].push_back({static_cast<int>(a)});

    for (std::size_t t = 1; t <= steps; ++t) {
        const auto& prev = flow.coordinates[t - 1];
        std::map<std::vector<int>, Eigen::Index> index;
        std::vector<std::vector<int>> states;
        struct Edge {
            Eigen::Index from, to;
            double kernel, target;
        };
        std::vector<Edge> edges;
        const Eigen::VectorXd lik = model.emission.col(model.observation(t));
        for (std::size_t i = 0; i < prev.size(); ++i) {
            const int a = prev[i].back();
            for (Eigen::Index b = 0; b < m; ++b) {
                const double q = model.proposal(a, b);
                if (q == 0.0) continue;
                std::vector<int> path = prev[i];
                path.push_back(static_cast<int>(b));
                for (std::size_t pos = 0; pos + 1 < path.size(); ++pos) {
                    if (!keep(t, pos)) path[pos] = -1;
                }
                auto [it, inserted] = index.try_emplace(path, static_cast<Eigen::Index>(states.size()));
                if (inserted) states.push_back(path);
                const double target =
                    flow.targets[t - 1](static_cast<Eigen::Index>(i)) * model.transition(a, b) * lik(b) /
                    pass.normalizers[t];
                edges.push_back({static_cast<Eigen::Index>(i), it->second, q, target});
            }
        }
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(prev.size()),
                                                  static_cast<Eigen::Index>(states.size()));
        Eigen::VectorXd pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states.size()));
        for (const Edge& e : edges) {
            k(e.from, e.to) += e.kernel;
            pi(e.to) += e.target;
        }
        flow.kernels.push_back(std::move(k));
        flow.targets.push_back(std::move(pi));
        flow.coordinates.push_back(std::move(states));
    }
    flow.validate();
    return flow;
}

}  // namespace

FiniteFlow hmm_filtering_flow(const FiniteHMM& model, std::size_t steps) {
    return build_hmm_flow(model, steps, [](std::size_t t, std::size_t pos) { return pos + 1 == t; });
}

FiniteFlow hmm_anchored_flow(const FiniteHMM& model, std::size_t steps, std::size_t anchor) {
    return build_hmm_flow(model, steps,
                          [anchor](std::size_t t, std::size_t pos) { return pos + 1 == t || pos == anchor; });
}

FiniteFlow hmm_path_flow(const FiniteHMM& model, std::size_t steps) {
    return build_hmm_flow(model, steps, [](std::size_t, std::size_t) { return true; });
}

FiniteFlow pair_joint_flow(const MarginalPairModel& model) {
    const auto targets = pair_joint_targets(model);
    const auto nxi = static_cast<Eigen::Index>(model.xi_states());
    const auto nl = static_cast<Eigen::Index>(model.lambda_states());
    const Eigen::Index n = nxi * nl;
    FiniteFlow flow;
    flow.initial_proposal.resize(n);
    Eigen::MatrixXd k(n, n);
    std::vector<std::vector<int>> coords;
    for (Eigen::Index xi = 0; xi < nxi; ++xi) {
        for (Eigen::Index l = 0; l < nl; ++l) {
            const Eigen::Index i = xi * nl + l;
            flow.initial_proposal(i) = model.initial_marginal(xi) * model.conditional_proposal(xi, l);
            coords.push_back({static_cast<int>(xi), static_cast<int>(l)});
            for (Eigen::Index xi2 = 0; xi2 < nxi; ++xi2) {
                for (Eigen::Index l2 = 0; l2 < nl; ++l2) {
                    k(i, xi2 * nl + l2) = model.marginal_kernel(xi, xi2) * model.conditional_proposal(xi2, l2);
                }
            }
        }
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
        Eigen::VectorXd pi(n);
        for (Eigen::Index xi = 0; xi < nxi; ++xi) {
            for (Eigen::Index l = 0; l < nl; ++l) pi(xi * nl + l) = targets[t](xi, l);
        }
        flow.targets.push_back(std::move(pi));
        flow.kernels.push_back(t == 0 ? Eigen::MatrixXd() : k);
        flow.coordinates.push_back(coords);
    }
    flow.validate();
    return flow;
}

FiniteFlow pair_marginal_flow(const MarginalPairModel& model) {
    const auto targets = pair_joint_targets(model);
    FiniteFlow flow;
    flow.initial_proposal = model.initial_marginal;
    std::vector<std::vector<int>> coords;
    for (Eigen::Index xi = 0; xi < model.initial_marginal.size(); ++xi) coords.push_back({static_cast<int>(xi)});
    for (std::size_t t = 0; t < targets.size(); ++t) {
        flow.targets.push_back(targets[t].rowwise().sum());
        flow.kernels.push_back(t == 0 ? Eigen::MatrixXd() : model.marginal_kernel);
        flow.coordinates.push_back(coords);
    }
    flow.validate();
    return flow;
}

Eigen::MatrixXd tabulate(const FiniteFlow& flow, std::size_t t, const CoordinateFunction& f, std::size_t d) {
    const auto& coords = flow.coordinates.at(t);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(d));
    std::vector<double> value(d);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        f(coords[i], value);
        for (std::size_t c = 0; c < d; ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = value[c];
    }
    return out;
}

Eigen::MatrixXd tabulate_position(const FiniteFlow& flow, std::size_t t, std::size_t k, const Eigen::MatrixXd& phi) {
    const auto d = static_cast<std::size_t>(phi.cols());
    return tabulate(
        flow, t,
        [&](std::span<const int> coords, std::span<double> out) {
            if (k >= coords.size() || coords[k] < 0) {
                throw Error("state at t=" + std::to_string(t) + " does not carry x_" + std::to_string(k));
            }
            for (std::size_t c = 0; c < d; ++c) out[c] = phi(coords[k], static_cast<Eigen::Index>(c));
        },
        d);
}

}  // namespace smc

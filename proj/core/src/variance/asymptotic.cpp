#include "smc/variance/asymptotic.hpp"

#include <string>

#include "smc/error.hpp"

namespace smc {

namespace {

Eigen::MatrixXd centered(const Eigen::VectorXd& p, const Eigen::MatrixXd& phi) {
    const Eigen::RowVectorXd mean = p.transpose() * phi;
    return phi.rowwise() - mean;
}

// sum_i w_i x_i x_i'
Eigen::MatrixXd weighted_outer(const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
    return x.transpose() * w.asDiagonal() * x;
}

struct FlowCache {
    std::vector<Eigen::VectorXd> proposals;
    std::vector<Eigen::VectorXd> weights;
    std::vector<Eigen::VectorXd> betas;  // squared-weight measures

    explicit FlowCache(const FiniteFlow& flow) {
        for (std::size_t t = 0; t <= flow.steps(); ++t) {
            proposals.push_back(flow.proposal(t));
            weights.push_back(flow.weight(t));
            const Eigen::VectorXd v2 = weights[t].array().square().matrix();
            if (t == 0) {
                betas.push_back(proposals[0].cwiseProduct(v2));
            } else {
                betas.push_back(Eigen::VectorXd(flow.kernels[t].transpose() * betas[t - 1]).cwiseProduct(v2));
            }
        }
    }
};

// V~_t(psi) under the given scheme's chain.
Eigen::MatrixXd chain_tilde(const FiniteFlow& flow, const FlowCache& cache, std::size_t t, Eigen::MatrixXd psi,
                            SelectionScheme scheme) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(psi.cols(), psi.cols());
    for (std::size_t k = t; k >= 1; --k) {
        const Eigen::MatrixXd& kern = flow.kernels[k];
        const Eigen::MatrixXd g = kern * psi;
        const Eigen::VectorXd& w = scheme == SelectionScheme::none ? cache.betas[k - 1] : flow.targets[k - 1];
        // E_w[Var_K psi]
        acc += weighted_outer(kern.transpose() * w, psi) - weighted_outer(w, g);
        if (scheme == SelectionScheme::multinomial) {
            acc += table_variance(flow.targets[k - 1], g);
        } else if (scheme == SelectionScheme::residual) {
            acc += residual_term(cache.proposals[k - 1], cache.weights[k - 1], g);
        }
        psi = cache.weights[k - 1].asDiagonal() * centered(flow.targets[k - 1], g);
    }
    return acc + table_variance(flow.initial_proposal, psi);
}

}  // namespace

Eigen::MatrixXd table_variance(const Eigen::VectorXd& p, const Eigen::MatrixXd& phi) {
    return weighted_outer(p, centered(p, phi));
}

Eigen::MatrixXd residual_term(const Eigen::VectorXd& proposal, const Eigen::VectorXd& v, const Eigen::MatrixXd& phi) {
    Eigen::VectorXd r(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) r(i) = fractional_part(v(i));
    const Eigen::VectorXd w = proposal.cwiseProduct(r);
    const double mass = w.sum();
    if (!(mass > 0.0)) return Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
    const Eigen::VectorXd first = phi.transpose() * w;
    return weighted_outer(w, phi) - first * first.transpose() / mass;
}

VarianceReport recursion_variances(const FiniteFlow& flow, const std::vector<Eigen::MatrixXd>& phis,
                                   SelectionScheme scheme) {
    if (scheme == SelectionScheme::systematic) {
        throw Error("no asymptotic variance is available for systematic selection");
    }
    if (phis.size() != flow.targets.size()) throw Error("need one functional table per step");
    const FlowCache cache(flow);
    VarianceReport report;
    report.scheme = scheme;
    for (std::size_t t = 0; t < phis.size(); ++t) {
        if (phis[t].rows() != flow.size(t)) throw Error("functional table size mismatch at t=" + std::to_string(t));
        VarianceRow row;
        row.t = t;
        row.target_var = table_variance(flow.targets[t], phis[t]);
        row.residual = residual_term(cache.proposals[t], cache.weights[t], phis[t]);
        row.tilde = chain_tilde(flow, cache, t, phis[t], scheme);
        const Eigen::MatrixXd weighted = cache.weights[t].asDiagonal() * centered(flow.targets[t], phis[t]);
        row.v = chain_tilde(flow, cache, t, weighted, scheme);
        switch (scheme) {
            case SelectionScheme::multinomial: row.hat = row.v + row.target_var; break;
            case SelectionScheme::residual: row.hat = row.v + row.residual; break;
            default: row.hat = row.v; break;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<Eigen::MatrixXd> weight_cascade(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t) {
    if (t > flow.steps()) throw Error("cascade beyond the flow horizon");
    if (phi.rows() != flow.size(t)) throw Error("functional table size mismatch");
    std::vector<Eigen::MatrixXd> h(t + 1);
    h[t] = centered(flow.targets[t], phi);
    for (std::size_t k = t; k >= 1; --k) h[k - 1] = flow.kernels[k] * (flow.weight(k).asDiagonal() * h[k]);
    return h;
}

Eigen::MatrixXd closed_form_variance(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t) {
    const auto h = weight_cascade(flow, phi, t);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
    for (std::size_t k = 0; k <= t; ++k) {
        const Eigen::VectorXd v = flow.weight(k);
        acc += weighted_outer(flow.proposal(k).cwiseProduct(v.cwiseProduct(v)), h[k]);
    }
    return acc;
}

Eigen::MatrixXd residual_gap(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t) {
    const auto h = weight_cascade(flow, phi, t);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
    for (std::size_t k = 0; k < t; ++k) {
        acc += residual_term(flow.proposal(k), flow.weight(k), h[k]) - table_variance(flow.targets[k], h[k]);
    }
    return acc;
}

Eigen::MatrixXd sis_variance(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t) {
    if (t > flow.steps()) throw Error("SIS variance beyond the flow horizon");
    if (phi.rows() != flow.size(t)) throw Error("functional table size mismatch");
    Eigen::VectorXd beta;
    for (std::size_t k = 0; k <= t; ++k) {
        const Eigen::VectorXd v = flow.weight(k);
        const Eigen::VectorXd v2 = v.cwiseProduct(v);
        beta = k == 0 ? Eigen::VectorXd(flow.initial_proposal.cwiseProduct(v2))
                      : Eigen::VectorXd((flow.kernels[k].transpose() * beta).cwiseProduct(v2));
    }
    return weighted_outer(beta, centered(flow.targets[t], phi));
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

bool is_psd(const Eigen::MatrixXd& m, double tolerance) { return min_eigenvalue(m) >= -tolerance; }

Eigen::MatrixXd weight_operator(const FiniteHMM& model, const ForwardPass& pass, std::size_t t) {
    return model.proposal.cwiseProduct(hmm_weight_table(model, pass, t));
}

std::vector<Eigen::MatrixXd> hmm_weight_cascade(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t) {
    if (phi.rows() != static_cast<Eigen::Index>(model.states())) throw Error("functional must be an m x d table");
    const ForwardPass pass = finite_hmm_forward(model, t);
    std::vector<Eigen::MatrixXd> h(t + 1);
    h[t] = centered(pass.filter[t], phi);
    for (std::size_t k = t; k >= 1; --k) h[k - 1] = weight_operator(model, pass, k) * h[k];
    return h;
}

Eigen::MatrixXd hmm_closed_form_variance(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t) {
    const ForwardPass pass = finite_hmm_forward(model, t);
    const auto h = hmm_weight_cascade(model, phi, t);
    Eigen::MatrixXd acc = weighted_outer(model.initial, h[0]);
    for (std::size_t k = 1; k <= t; ++k) {
        const Eigen::MatrixXd v = hmm_weight_table(model, pass, k);
        // mass on x_k of pi_{k-1}(xi) q(x | xi) v_k(xi, x)^2
        const Eigen::VectorXd w =
            model.proposal.cwiseProduct(v.cwiseProduct(v)).transpose() * pass.filter[k - 1];
        acc += weighted_outer(w, h[k]);
    }
    return acc;
}

Eigen::MatrixXd hmm_residual_gap(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t) {
    const ForwardPass pass = finite_hmm_forward(model, t);
    const auto h = hmm_weight_cascade(model, phi, t);
    const auto m = static_cast<Eigen::Index>(model.states());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(phi.cols(), phi.cols());
    for (std::size_t k = 0; k < t; ++k) {
        if (k == 0) {
            acc += residual_term(model.initial, Eigen::VectorXd::Ones(m), h[0]);
        } else {
            const Eigen::MatrixXd v = hmm_weight_table(model, pass, k);
            Eigen::VectorXd prop(m * m), vv(m * m);
            Eigen::MatrixXd hh(m * m, phi.cols());
            for (Eigen::Index xi = 0; xi < m; ++xi) {
                for (Eigen::Index x = 0; x < m; ++x) {
                    prop(xi * m + x) = pass.filter[k - 1](xi) * model.proposal(xi, x);
                    vv(xi * m + x) = v(xi, x);
                    hh.row(xi * m + x) = h[k].row(x);
                }
            }
            acc += residual_term(prop, vv, hh);
        }
        acc -= table_variance(pass.filter[k], h[k]);
    }
    return acc;
}

}  // namespace smc

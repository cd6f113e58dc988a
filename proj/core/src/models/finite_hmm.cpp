#include "smc/models/finite_hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "smc/error.hpp"

namespace smc {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_stochastic(const Eigen::MatrixXd& k, const std::string& what) {
    for (Eigen::Index r = 0; r < k.rows(); ++r) {
        if ((k.row(r).array() < 0.0).any() || !k.row(r).allFinite()) {
            throw Error(what + " has a negative or non-finite entry in row " + std::to_string(r));
        }
        if (std::abs(k.row(r).sum() - 1.0) > kRowTolerance) {
            throw Error(what + " row " + std::to_string(r) + " does not sum to 1");
        }
    }
}

std::vector<double> cumulative_row(const Eigen::MatrixXd& k, Eigen::Index r) {
    std::vector<double> out(static_cast<std::size_t>(k.cols()));
    double acc = 0.0;
    for (Eigen::Index c = 0; c < k.cols(); ++c) {
        acc += k(r, c);
        out[static_cast<std::size_t>(c)] = acc;
    }
    return out;
}

struct ScaledBackward {
    // beta[k](a) = p(y_{k+1:t} | x_k = a) / prod_{i=k+1}^t c_i
    std::vector<Eigen::VectorXd> beta;
};

ScaledBackward scaled_backward(const FiniteHMM& model, const ForwardPass& pass, std::size_t t) {
    const auto m = static_cast<Eigen::Index>(model.states());
    ScaledBackward out;
    out.beta.assign(t + 1, Eigen::VectorXd::Ones(m));
    for (std::size_t k = t; k-- > 0;) {
        const Eigen::VectorXd lik = model.emission.col(model.observation(k + 1));
        out.beta[k] = model.transition * lik.cwiseProduct(out.beta[k + 1]) / pass.normalizers[k + 1];
    }
    return out;
}

}  // namespace

void FiniteHMM::validate() const {
    const auto m = initial.size();
    if (m == 0) throw Error("HMM needs at least one state");
    if (transition.rows() != m || transition.cols() != m) throw Error("transition table must be m x m");
    if (proposal.rows() != m || proposal.cols() != m) throw Error("proposal table must be m x m");
    if (emission.rows() != m || emission.cols() == 0) throw Error("emission table must have m rows");
    if ((initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > kRowTolerance) {
        throw Error("initial distribution must be a probability vector");
    }
    check_stochastic(transition, "transition");
    check_stochastic(proposal, "proposal");
    if ((emission.array() < 0.0).any() || !emission.allFinite()) throw Error("emission entries must be >= 0");
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
            if (transition(a, b) > 0.0 && proposal(a, b) == 0.0) {
                throw Error("proposal misses transition support at (" + std::to_string(a) + ", " +
                            std::to_string(b) + ")");
            }
        }
    }
    for (int y : observations) {
        if (y < 0 || y >= emission.cols()) throw Error("observation " + std::to_string(y) + " outside alphabet");
    }
}

FiniteHMM FiniteHMM::bootstrap(Eigen::VectorXd initial, Eigen::MatrixXd transition, Eigen::MatrixXd emission,
                               std::vector<int> observations) {
    FiniteHMM out;
    out.initial = std::move(initial);
    out.proposal = transition;
    out.transition = std::move(transition);
    out.emission = std::move(emission);
    out.observations = std::move(observations);
    out.validate();
    return out;
}

ForwardPass finite_hmm_forward(const FiniteHMM& model, std::size_t steps) {
    if (steps > model.horizon()) throw Error("forward pass beyond the observation horizon");
    ForwardPass out;
    out.filter.push_back(model.initial);
    out.predictive.push_back(model.initial);
    out.normalizers.push_back(1.0);
    for (std::size_t t = 1; t <= steps; ++t) {
        Eigen::VectorXd pred = model.transition.transpose() * out.filter.back();
        Eigen::VectorXd joint = pred.cwiseProduct(model.emission.col(model.observation(t)));
        const double c = joint.sum();
        if (!(c > 0.0)) throw Error("impossible observation at t=" + std::to_string(t));
        out.predictive.push_back(std::move(pred));
        out.filter.push_back(joint / c);
        out.normalizers.push_back(c);
    }
    return out;
}

std::vector<Eigen::MatrixXd> posterior_kernels(const FiniteHMM& model, std::size_t t) {
    const ForwardPass pass = finite_hmm_forward(model, t);
    const ScaledBackward back = scaled_backward(model, pass, t);
    const auto m = static_cast<Eigen::Index>(model.states());
    std::vector<Eigen::MatrixXd> out;
    out.reserve(t);
    for (std::size_t k = 0; k < t; ++k) {
        Eigen::MatrixXd p(m, m);
        const Eigen::VectorXd lik = model.emission.col(model.observation(k + 1));
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) {
                p(a, b) = model.transition(a, b) * lik(b) * back.beta[k + 1](b);
            }
            const double s = p.row(a).sum();
            if (s > 0.0) {
                p.row(a) /= s;
            } else {
                p.row(a) = model.transition.row(a);
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

Eigen::MatrixXd posterior_conditional(const FiniteHMM& model, std::size_t t, std::size_t k) {
    if (k > t) throw Error("conditional needs k <= t");
    const auto kernels = posterior_kernels(model, t);
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(model.states()),
                                                    static_cast<Eigen::Index>(model.states()));
    for (std::size_t i = k; i < t; ++i) out = out * kernels[i];
    return out;
}

Eigen::VectorXd smoothing_marginal(const FiniteHMM& model, std::size_t t, std::size_t k) {
    if (k > t) throw Error("smoothing marginal needs k <= t");
    const ForwardPass pass = finite_hmm_forward(model, t);
    const ScaledBackward back = scaled_backward(model, pass, t);
    Eigen::VectorXd out = pass.filter[k].cwiseProduct(back.beta[k]);
    return out / out.sum();
}

Eigen::MatrixXd first_current_joint(const FiniteHMM& model, std::size_t t) {
    if (t == 0) return model.initial.asDiagonal();
    const Eigen::VectorXd first = smoothing_marginal(model, t, 1);
    return first.asDiagonal() * posterior_conditional(model, t, 1);
}

Eigen::MatrixXd hmm_weight_table(const FiniteHMM& model, const ForwardPass& pass, std::size_t t) {
    if (t == 0 || t >= pass.normalizers.size()) throw Error("weight table needs 1 <= t <= forward steps");
    const auto m = static_cast<Eigen::Index>(model.states());
    const Eigen::VectorXd lik = model.emission.col(model.observation(t));
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
            if (model.proposal(a, b) > 0.0) {
                v(a, b) = model.transition(a, b) * lik(b) / (model.proposal(a, b) * pass.normalizers[t]);
            }
        }
    }
    return v;
}

HmmSample simulate_hmm(const FiniteHMM& model, std::size_t steps, RngStream& rng) {
    const auto m = static_cast<Eigen::Index>(model.states());
    std::vector<std::vector<double>> trans(static_cast<std::size_t>(m));
    std::vector<std::vector<double>> emit(static_cast<std::size_t>(m));
    for (Eigen::Index a = 0; a < m; ++a) {
        trans[static_cast<std::size_t>(a)] = cumulative_row(model.transition, a);
        emit[static_cast<std::size_t>(a)] = cumulative_row(model.emission, a);
    }
    std::vector<double> init(static_cast<std::size_t>(m));
    double acc = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) init[static_cast<std::size_t>(a)] = acc += model.initial(a);

    HmmSample out;
    out.states.push_back(static_cast<int>(rng.categorical_cdf(init)));
    for (std::size_t t = 1; t <= steps; ++t) {
        const int x = static_cast<int>(rng.categorical_cdf(trans[static_cast<std::size_t>(out.states.back())]));
        out.states.push_back(x);
        out.observations.push_back(static_cast<int>(rng.categorical_cdf(emit[static_cast<std::size_t>(x)])));
    }
    return out;
}

namespace {

struct HmmTables {
    std::vector<double> initial_cdf;
    std::vector<std::vector<double>> proposal_cdf;
    std::vector<Eigen::MatrixXd> log_weights;  // index t, t >= 1
    Eigen::Index states = 0;
};

std::shared_ptr<const HmmTables> build_tables(const FiniteHMM& model) {
    model.validate();
    auto tables = std::make_shared<HmmTables>();
    const auto m = static_cast<Eigen::Index>(model.states());
    tables->states = m;
    double acc = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) tables->initial_cdf.push_back(acc += model.initial(a));
    for (Eigen::Index a = 0; a < m; ++a) tables->proposal_cdf.push_back(cumulative_row(model.proposal, a));
    const ForwardPass pass = finite_hmm_forward(model, model.horizon());
    tables->log_weights.emplace_back();
    for (std::size_t t = 1; t <= model.horizon(); ++t) {
        tables->log_weights.push_back(hmm_weight_table(model, pass, t).array().log().matrix());
    }
    return tables;
}

template <typename State>
std::function<std::optional<Estimate>(std::size_t, const Functional<State>&)> hmm_oracle(
    const FiniteHMM& model, std::function<State(int first, int current, std::size_t t)> make_state) {
    return [model, make_state](std::size_t t, const Functional<State>& f) -> std::optional<Estimate> {
        const Eigen::MatrixXd joint = first_current_joint(model, t);
        Estimate out(f.arity, 0.0);
        std::vector<double> value(f.arity);
        for (Eigen::Index a = 0; a < joint.rows(); ++a) {
            for (Eigen::Index b = 0; b < joint.cols(); ++b) {
                if (joint(a, b) == 0.0) continue;
                f.evaluate(make_state(static_cast<int>(a), static_cast<int>(b), t), value);
                for (std::size_t c = 0; c < f.arity; ++c) out[c] += joint(a, b) * value[c];
            }
        }
        return out;
    };
}

}  // namespace

ModelSpec<HmmParticle> make_hmm_model(const FiniteHMM& model) {
    auto tables = build_tables(model);
    ModelSpec<HmmParticle> spec;
    spec.name = "finite_hmm";
    spec.horizon = model.horizon();
    spec.sample_initial = [tables](RngStream& rng) {
        const int x = static_cast<int>(rng.categorical_cdf(tables->initial_cdf));
        return HmmParticle{x, x};
    };
    spec.kernel_for_step = [tables](std::size_t t, std::span<const HmmParticle>) -> MutationKernel<HmmParticle> {
        return [tables, t](const HmmParticle& parent, RngStream& rng) {
            const int x = static_cast<int>(
                rng.categorical_cdf(tables->proposal_cdf[static_cast<std::size_t>(parent.current)]));
            return HmmParticle{t == 1 ? x : parent.first, x};
        };
    };
    spec.log_weight = [tables](std::size_t t, const HmmParticle& p, const HmmParticle* parent) {
        if (t == 0 || parent == nullptr) return 0.0;
        return tables->log_weights[t](parent->current, p.current);
    };
    spec.exact_mean = hmm_oracle<HmmParticle>(
        model, [](int first, int current, std::size_t) { return HmmParticle{first, current}; });
    return spec;
}

ModelSpec<std::vector<int>> make_hmm_path_model(const FiniteHMM& model) {
    auto tables = build_tables(model);
    ModelSpec<std::vector<int>> spec;
    spec.name = "finite_hmm_path";
    spec.horizon = model.horizon();
    spec.sample_initial = [tables](RngStream& rng) {
        return std::vector<int>{static_cast<int>(rng.categorical_cdf(tables->initial_cdf))};
    };
    spec.kernel_for_step = [tables](std::size_t, std::span<const std::vector<int>>)
        -> MutationKernel<std::vector<int>> {
        return [tables](const std::vector<int>& parent, RngStream& rng) {
            std::vector<int> path = parent;
            path.push_back(static_cast<int>(
                rng.categorical_cdf(tables->proposal_cdf[static_cast<std::size_t>(parent.back())])));
            return path;
        };
    };
    spec.log_weight = [tables](std::size_t t, const std::vector<int>& p, const std::vector<int>* parent) {
        if (t == 0 || parent == nullptr) return 0.0;
        return tables->log_weights[t](parent->back(), p.back());
    };
    return spec;
}

HmmBounds hmm_bounds(const FiniteHMM& model) {
    model.validate();
    HmmBounds out;
    auto ratio = [](const Eigen::MatrixXd& k) {
        double worst = 1.0;
        for (Eigen::Index x = 0; x < k.cols(); ++x) {
            const double hi = k.col(x).maxCoeff();
            const double lo = k.col(x).minCoeff();
            if (hi == 0.0) continue;
            worst = std::max(worst, lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
        }
        return worst;
    };
    out.kernel_ratio = std::max(ratio(model.transition), ratio(model.proposal));
    out.emission_low = model.emission.minCoeff();
    out.emission_high = model.emission.maxCoeff();
    return out;
}

FiniteHMM two_state_hmm(std::size_t steps) {
    static const int pattern[] = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1};
    std::vector<int> ys(steps);
    for (std::size_t t = 0; t < steps; ++t) ys[t] = pattern[t % 10];
    Eigen::MatrixXd g(2, 2);
    g << 0.9, 0.1, 0.2, 0.8;
    Eigen::MatrixXd f(2, 2);
    f << 0.2, 0.8, 0.7, 0.3;
    return FiniteHMM::bootstrap(Eigen::Vector2d(0.5, 0.5), g, f, std::move(ys));
}

FiniteHMM three_state_stable_hmm(std::size_t steps, std::uint64_t seed) {
    Eigen::MatrixXd g(3, 3);
    g << 0.6, 0.2, 0.2, 0.2, 0.6, 0.2, 0.2, 0.2, 0.6;
    Eigen::MatrixXd f(3, 2);
    f << 1.0 / 3.0, 2.0 / 3.0, 0.5, 0.5, 2.0 / 3.0, 1.0 / 3.0;
    FiniteHMM model = FiniteHMM::bootstrap(Eigen::Vector3d::Constant(1.0 / 3.0), g, f, {});
    RngStream rng(seed, 0);
    model.observations = simulate_hmm(model, steps, rng).observations;
    model.validate();
    return model;
}

}  // namespace smc

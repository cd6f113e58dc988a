#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "smc/models/finite_hmm.hpp"
#include "smc/resampling.hpp"
#include "smc/variance/flow.hpp"

namespace smc {

/// Exact variance quantities at one step for the functional phi_t.
struct VarianceRow {
    std::size_t t = 0;
    Eigen::MatrixXd tilde;       ///< V~_t(phi_t)
    Eigen::MatrixXd v;           ///< V_t(phi_t), pre-selection
    Eigen::MatrixXd hat;         ///< V^_t(phi_t), post-selection
    Eigen::MatrixXd residual;    ///< R_t(phi_t)
    Eigen::MatrixXd target_var;  ///< Var_{pi_t}(phi_t)
};

/// Rows for t = 0..T. The scheme selects the chain: multinomial adds
/// Var_pi at each selection, residual adds R, none is selection-free.
struct VarianceReport {
    SelectionScheme scheme = SelectionScheme::multinomial;
    std::vector<VarianceRow> rows;
};

/// phis[t] is the n_t x d table of the functional evaluated at step t.
VarianceReport recursion_variances(const FiniteFlow& flow, const std::vector<Eigen::MatrixXd>& phis,
                                   SelectionScheme scheme);

/// Sum over k of E_{pi~_k}[v_k^2 h_k h_k'], h_t = phi - E_{pi_t} phi,
/// h_k = K_{k+1}(v_{k+1} h_{k+1}).
Eigen::MatrixXd closed_form_variance(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t);

/// The cascade h_0..h_t of the closed form (h_k is n_k x d).
std::vector<Eigen::MatrixXd> weight_cascade(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t);

/// V^r_t - V_t = sum_{k<t} [R_k(h_k) - Var_{pi_k}(h_k)].
Eigen::MatrixXd residual_gap(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t);

/// Variance without selection: sum_z beta_t(z) phibar phibar', where
/// beta_0 = pi~_0 v_0^2 and beta_t = (beta_{t-1} K_t) v_t^2.
Eigen::MatrixXd sis_variance(const FiniteFlow& flow, const Eigen::MatrixXd& phi, std::size_t t);

/// Var_p(phi) for a probability vector p and an n x d table.
Eigen::MatrixXd table_variance(const Eigen::VectorXd& p, const Eigen::MatrixXd& phi);

/// R(phi) = E[r(v) phi phi'] - E[r(v) phi] E[r(v) phi]' / E[r(v)] under the
/// proposal p, with r the snapped fractional part; zero when E r(v) = 0.
Eigen::MatrixXd residual_term(const Eigen::VectorXd& proposal, const Eigen::VectorXd& v, const Eigen::MatrixXd& phi);

/// Smallest eigenvalue of the symmetric part.
double min_eigenvalue(const Eigen::MatrixXd& m);
bool is_psd(const Eigen::MatrixXd& m, double tolerance = 1e-10);

/// Native m x m weight operator of the filter at step t >= 1:
/// E_t(xi, x) = q(x | xi) v_t(xi, x), acting on functions of x_t.
Eigen::MatrixXd weight_operator(const FiniteHMM& model, const ForwardPass& pass, std::size_t t);

/// Closed form on the HMM state space for phi(x_t) (phi is m x d), computed
/// with weight operators only.
Eigen::MatrixXd hmm_closed_form_variance(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t);

/// Residual gap on the HMM state space for phi(x_t).
Eigen::MatrixXd hmm_residual_gap(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t);

/// E_{k+1:t}(phibar) on the HMM state space, k = 0..t (each m x d).
std::vector<Eigen::MatrixXd> hmm_weight_cascade(const FiniteHMM& model, const Eigen::MatrixXd& phi, std::size_t t);

}  // namespace smc

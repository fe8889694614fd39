#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nsp_ope/mdp.hpp"

/// \file dp.hpp
/// Exact dynamic-programming oracles: q/v-functions, policy values, marginal
/// state distributions, and discounted visitation distributions. These are
/// closed-form computations (no Monte Carlo) and serve as ground truth for
/// the estimators and efficiency bounds.

namespace nspope {

/// q/v tables for a finite-horizon process: q[t][s*A+a], v[t][s], t = 0..H-1
/// (0-based internal index for decision time t+1).
struct FiniteQV {
    std::vector<std::vector<real_t>> q;
    std::vector<std::vector<real_t>> v;
};

/// q/v tables for a stationary-discounted process.
struct StationaryQV {
    std::vector<real_t> q;  ///< q[s*A+a]
    std::vector<real_t> v;  ///< v[s]
};

/// Backward induction with q_{H+1} == 0:
/// q_t(s,a) = E[r_t|s,a] + sum_{s'} P_t(s'|s,a) v_{t+1}(s'),
/// v_t(s) = sum_a pi(a|s) q_t(s,a).
inline FiniteQV exact_q_v_finite(const TabularDecisionProcess& mdp,
                                 const StochasticPolicy& policy) {
    mdp.require_finite("exact_q_v_finite");
    mdp.check_policy(policy, "exact_q_v_finite");
    const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
    FiniteQV out;
    out.q.assign(H, std::vector<real_t>(static_cast<std::size_t>(S) * A, 0.0));
    out.v.assign(H, std::vector<real_t>(S, 0.0));
    std::vector<real_t> v_next(S, 0.0);
    for (int t = H - 1; t >= 0; --t) {
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                real_t q = mdp.mean_reward(t, s, a);
                for (int sn = 0; sn < S; ++sn) q += mdp.trans(t, s, a, sn) * v_next[sn];
                out.q[t][mdp.sa(s, a)] = q;
            }
            real_t v = 0.0;
            for (int a = 0; a < A; ++a) v += policy.prob(t, s, a) * out.q[t][mdp.sa(s, a)];
            out.v[t][s] = v;
        }
        v_next = out.v[t];
    }
    return out;
}

/// Solves the stationary Bellman fixed point q = rbar + gamma * P * Pi_e * q
/// by a dense linear solve in v, then recovers q. The Bellman residual is
/// checked against kSolveTol.
inline StationaryQV exact_q_v_discounted(const TabularDecisionProcess& mdp,
                                         const StochasticPolicy& policy) {
    mdp.require_discounted("exact_q_v_discounted");
    mdp.check_policy(policy, "exact_q_v_discounted");
    const int S = mdp.n_states, A = mdp.n_actions;
    // (I - gamma P_pi) v = rbar_pi
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S);
    Eigen::VectorXd rhs(S);
    for (int s = 0; s < S; ++s) {
        real_t rbar = 0.0;
        for (int a = 0; a < A; ++a) {
            real_t pa = policy.prob(0, s, a);
            rbar += pa * mdp.mean_reward(0, s, a);
            for (int sn = 0; sn < S; ++sn)
                lhs(s, sn) -= mdp.gamma * pa * mdp.trans(0, s, a, sn);
        }
        rhs(s) = rbar;
    }
    Eigen::VectorXd v = lhs.partialPivLu().solve(rhs);
    StationaryQV out;
    out.v.assign(v.data(), v.data() + S);
    out.q.assign(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            real_t q = mdp.mean_reward(0, s, a);
            for (int sn = 0; sn < S; ++sn) q += mdp.gamma * mdp.trans(0, s, a, sn) * out.v[sn];
            out.q[mdp.sa(s, a)] = q;
        }
    // residual of v = sum_a pi q
    real_t resid = 0.0;
    for (int s = 0; s < S; ++s) {
        real_t vv = 0.0;
        for (int a = 0; a < A; ++a) vv += policy.prob(0, s, a) * out.q[mdp.sa(s, a)];
        resid = std::max(resid, std::abs(vv - out.v[s]));
    }
    if (resid > kSolveTol)
        throw computation_error("exact_q_v_discounted: Bellman residual " + std::to_string(resid));
    return out;
}

/// J = sum_s p1(s) v_1(s).
inline real_t exact_value_finite(const TabularDecisionProcess& mdp,
                                 const StochasticPolicy& policy) {
    FiniteQV qv = exact_q_v_finite(mdp, policy);
    real_t j = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) j += mdp.initial_dist[s] * qv.v[0][s];
    return j;
}

/// J(gamma) = (1-gamma) sum_s p_e1(s) v(s).
inline real_t exact_value_discounted(const TabularDecisionProcess& mdp,
                                     const StochasticPolicy& policy) {
    StationaryQV qv = exact_q_v_discounted(mdp, policy);
    real_t j = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) j += mdp.initial_dist[s] * qv.v[s];
    return (1.0 - mdp.gamma) * j;
}

/// Forward recursion for the state marginals p_pi(s_t), t = 1..H; each time
/// slice sums to one up to kProbTol.
inline std::vector<std::vector<real_t>> exact_marginals_finite(
    const TabularDecisionProcess& mdp, const StochasticPolicy& policy) {
    mdp.require_finite("exact_marginals_finite");
    mdp.check_policy(policy, "exact_marginals_finite");
    const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
    std::vector<std::vector<real_t>> d(H, std::vector<real_t>(S, 0.0));
    d[0] = mdp.initial_dist;
    for (int t = 0; t + 1 < H; ++t)
        for (int s = 0; s < S; ++s) {
            if (d[t][s] == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                real_t w = d[t][s] * policy.prob(t, s, a);
                if (w == 0.0) continue;
                for (int sn = 0; sn < S; ++sn) d[t + 1][sn] += w * mdp.trans(t, s, a, sn);
            }
        }
    return d;
}

/// gamma-discounted average visitation distribution started from p_e1:
/// solves p = (1-gamma) p_e1 + gamma (P Pi)^T p as a dense linear system and
/// checks that the solution is a distribution.
inline std::vector<real_t> exact_discounted_visitation(const TabularDecisionProcess& mdp,
                                                       const StochasticPolicy& policy) {
    mdp.require_discounted("exact_discounted_visitation");
    mdp.check_policy(policy, "exact_discounted_visitation");
    const int S = mdp.n_states, A = mdp.n_actions;
    // M(s, s') = sum_a pi(a|s) P(s'|s,a); solve (I - gamma M^T) p = (1-gamma) p_e1
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            real_t pa = policy.prob(0, s, a);
            if (pa == 0.0) continue;
            for (int sn = 0; sn < S; ++sn)
                lhs(sn, s) -= mdp.gamma * pa * mdp.trans(0, s, a, sn);
        }
    Eigen::VectorXd rhs(S);
    for (int s = 0; s < S; ++s) rhs(s) = (1.0 - mdp.gamma) * mdp.initial_dist[s];
    Eigen::VectorXd p = lhs.partialPivLu().solve(rhs);
    real_t total = p.sum();
    if (std::abs(total - 1.0) > kSolveTol)
        throw computation_error("exact_discounted_visitation: mass " + std::to_string(total));
    std::vector<real_t> out(p.data(), p.data() + S);
    for (real_t& x : out)
        if (x < 0.0 && x > -kSolveTol) x = 0.0;
    return out;
}

/// Stationary distribution of the state chain induced by (mdp, policy),
/// computed by power iteration from `start` (defaults to the sampling
/// distribution). Converges on the recurrent class reachable from `start`;
/// irreducibility is the caller's responsibility.
inline std::vector<real_t> stationary_state_distribution(
    const TabularDecisionProcess& mdp, const StochasticPolicy& policy,
    const std::vector<real_t>* start = nullptr, int max_iters = 200000,
    real_t tol = 1e-14) {
    mdp.require_discounted("stationary_state_distribution");
    const int S = mdp.n_states, A = mdp.n_actions;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S, S);  // m(s', s)
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            real_t pa = policy.prob(0, s, a);
            if (pa == 0.0) continue;
            for (int sn = 0; sn < S; ++sn) m(sn, s) += pa * mdp.trans(0, s, a, sn);
        }
    const std::vector<real_t>& init = start ? *start : mdp.p_b();
    Eigen::VectorXd p(S);
    for (int s = 0; s < S; ++s) p(s) = init[s];
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd next = m * p;
        next /= next.sum();
        real_t delta = (next - p).cwiseAbs().maxCoeff();
        p = next;
        if (delta < tol) break;
    }
    std::vector<real_t> out(p.data(), p.data() + S);
    for (real_t& x : out)
        if (x < tol) x = std::max(x, 0.0);
    return out;
}

}  // namespace nspope

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "nsp_ope/dp.hpp"
#include "nsp_ope/mdp.hpp"

/// \file policies.hpp
/// Natural stochastic policies (tilting and modified treatment) constructed
/// as deviations from a behavior policy, and the density-ratio quantities
/// eta, lambda, w, mu, w*, mu* they induce.

namespace nspope {

/// Specification of a natural stochastic policy.
///
/// Tilting: strictly positive action weights u (per time slice or shared).
/// Modified treatment: a map tau[s*A + a] -> action that must be a bijection
/// on the action set for every state; actions are discrete here, so the
/// invertibility requirement becomes "tau(s, .) is a permutation".
struct NaturalPolicySpec {
    enum class Kind { tilting, modified_treatment };
    Kind kind = Kind::tilting;
    std::vector<std::vector<real_t>> u;   ///< [slice][a], tilting only
    std::vector<std::vector<int>> tau;    ///< [slice][s*A+a], modified treatment only

    static NaturalPolicySpec tilting(std::vector<real_t> u_single) {
        NaturalPolicySpec spec;
        spec.kind = Kind::tilting;
        spec.u.push_back(std::move(u_single));
        return spec;
    }
    static NaturalPolicySpec modified(std::vector<int> tau_single) {
        NaturalPolicySpec spec;
        spec.kind = Kind::modified_treatment;
        spec.tau.push_back(std::move(tau_single));
        return spec;
    }
    /// u(a) = ceil((a+1)/2) for 0-indexed actions.
    static NaturalPolicySpec ceil_half_tilting(int n_actions) {
        std::vector<real_t> u(n_actions);
        for (int a = 0; a < n_actions; ++a) u[a] = static_cast<real_t>((a + 2) / 2);
        return tilting(std::move(u));
    }
    /// tau(s,a) = (s + a) mod n_actions.
    static NaturalPolicySpec shift_mod_modified(int n_states, int n_actions) {
        std::vector<int> tau(static_cast<std::size_t>(n_states) * n_actions);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a)
                tau[static_cast<std::size_t>(s) * n_actions + a] = (s + a) % n_actions;
        return modified(std::move(tau));
    }
    /// tau(s,a) = a.
    static NaturalPolicySpec identity_modified(int n_states, int n_actions) {
        std::vector<int> tau(static_cast<std::size_t>(n_states) * n_actions);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a)
                tau[static_cast<std::size_t>(s) * n_actions + a] = a;
        return modified(std::move(tau));
    }

    int n_slices() const {
        return static_cast<int>(kind == Kind::tilting ? u.size() : tau.size());
    }
    real_t u_at(int t, int a) const {
        return u[std::min<std::size_t>(t, u.size() - 1)][a];
    }
    int tau_at(int t, int s, int a, int n_actions) const {
        return tau[std::min<std::size_t>(t, tau.size() - 1)]
                  [static_cast<std::size_t>(s) * n_actions + a];
    }
    /// Inverse map: tau^{-1}(s, .) as a permutation table, per slice.
    std::vector<std::vector<int>> tau_inverse(int n_states, int n_actions) const {
        std::vector<std::vector<int>> inv(tau.size());
        for (std::size_t t = 0; t < tau.size(); ++t) {
            inv[t].assign(static_cast<std::size_t>(n_states) * n_actions, -1);
            for (int s = 0; s < n_states; ++s)
                for (int a = 0; a < n_actions; ++a) {
                    int target = tau[t][static_cast<std::size_t>(s) * n_actions + a];
                    inv[t][static_cast<std::size_t>(s) * n_actions + target] = a;
                }
        }
        return inv;
    }

    void validate(int n_states, int n_actions) const {
        if (kind == Kind::tilting) {
            if (u.empty()) throw validation_error("tilting spec: no u slices");
            for (const auto& slice : u) {
                if (slice.size() != static_cast<std::size_t>(n_actions))
                    throw validation_error("tilting spec: u has wrong length");
                for (real_t x : slice)
                    if (!(x > 0.0))
                        throw validation_error("tilting spec: u must be strictly positive");
            }
        } else {
            if (tau.empty()) throw validation_error("modified spec: no tau slices");
            for (const auto& slice : tau) {
                if (slice.size() != static_cast<std::size_t>(n_states) * n_actions)
                    throw validation_error("modified spec: tau has wrong size");
                for (int s = 0; s < n_states; ++s) {
                    std::vector<bool> hit(n_actions, false);
                    for (int a = 0; a < n_actions; ++a) {
                        int target = slice[static_cast<std::size_t>(s) * n_actions + a];
                        if (target < 0 || target >= n_actions)
                            throw validation_error("modified spec: tau value out of range at s=" +
                                                   std::to_string(s));
                        if (hit[target])
                            throw validation_error(
                                "modified spec: tau is not a bijection at s=" + std::to_string(s));
                        hit[target] = true;
                    }
                }
            }
        }
    }
};

/// pi_e(a|s) = u(a) pi_b(a|s) / sum_a' u(a') pi_b(a'|s). Absolute continuity
/// with respect to pi_b holds by construction.
inline StochasticPolicy make_tilting(const StochasticPolicy& pi_b,
                                     const NaturalPolicySpec& spec) {
    if (spec.kind != NaturalPolicySpec::Kind::tilting)
        throw validation_error("make_tilting: spec is not a tilting spec");
    const int S = pi_b.n_states(), A = pi_b.n_actions();
    spec.validate(S, A);
    const int n_out = std::max(pi_b.n_slices(), spec.n_slices());
    std::vector<std::vector<real_t>> probs(n_out,
                                           std::vector<real_t>(static_cast<std::size_t>(S) * A));
    for (int t = 0; t < n_out; ++t)
        for (int s = 0; s < S; ++s) {
            real_t denom = 0.0;
            for (int a = 0; a < A; ++a) denom += spec.u_at(t, a) * pi_b.prob(t, s, a);
            for (int a = 0; a < A; ++a)
                probs[t][static_cast<std::size_t>(s) * A + a] =
                    spec.u_at(t, a) * pi_b.prob(t, s, a) / denom;
        }
    return StochasticPolicy(S, A, std::move(probs));
}

/// Discrete pushforward of pi_b under the action map tau:
/// pi_e(a|s) = sum_{a': tau(s,a') = a} pi_b(a'|s), which with the bijection
/// requirement equals pi_b(tau^{-1}(s,a) | s).
inline StochasticPolicy make_modified(const StochasticPolicy& pi_b,
                                      const NaturalPolicySpec& spec) {
    if (spec.kind != NaturalPolicySpec::Kind::modified_treatment)
        throw validation_error("make_modified: spec is not a modified-treatment spec");
    const int S = pi_b.n_states(), A = pi_b.n_actions();
    spec.validate(S, A);
    const int n_out = std::max(pi_b.n_slices(), spec.n_slices());
    std::vector<std::vector<real_t>> probs(
        n_out, std::vector<real_t>(static_cast<std::size_t>(S) * A, 0.0));
    for (int t = 0; t < n_out; ++t)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                probs[t][static_cast<std::size_t>(s) * A + spec.tau_at(t, s, a, A)] +=
                    pi_b.prob(t, s, a);
    return StochasticPolicy(S, A, std::move(probs));
}

inline StochasticPolicy make_evaluation_policy(const StochasticPolicy& pi_b,
                                               const NaturalPolicySpec& spec) {
    return spec.kind == NaturalPolicySpec::Kind::tilting ? make_tilting(pi_b, spec)
                                                         : make_modified(pi_b, spec);
}

/// q^tau_t(s,a) = q_t(s, tau_t(s,a)); pure relabeling of the action axis.
inline std::vector<std::vector<real_t>> apply_tau_to_q(
    const std::vector<std::vector<real_t>>& q, const NaturalPolicySpec& spec, int n_states,
    int n_actions) {
    if (spec.kind != NaturalPolicySpec::Kind::modified_treatment)
        throw validation_error("apply_tau_to_q: spec is not a modified-treatment spec");
    std::vector<std::vector<real_t>> out(q.size());
    for (std::size_t t = 0; t < q.size(); ++t) {
        out[t].resize(q[t].size());
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a)
                out[t][static_cast<std::size_t>(s) * n_actions + a] =
                    q[t][static_cast<std::size_t>(s) * n_actions +
                         spec.tau_at(static_cast<int>(t), s, a, n_actions)];
    }
    return out;
}

/// Instantaneous ratios eta = pi_e/pi_b per time slice, with 0/0 := 0.
/// Entries where pi_e > 0 but pi_b = 0 are recorded in the diagnostics; the
/// caller decides whether that is a hard overlap violation.
inline std::vector<std::vector<real_t>> compute_eta_tables(const StochasticPolicy& pi_b,
                                                           const StochasticPolicy& pi_e,
                                                           int n_slices, Diagnostics* diag) {
    const int S = pi_b.n_states(), A = pi_b.n_actions();
    std::vector<std::vector<real_t>> eta(n_slices,
                                         std::vector<real_t>(static_cast<std::size_t>(S) * A, 0.0));
    for (int t = 0; t < n_slices; ++t)
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                real_t pb = pi_b.prob(t, s, a), pe = pi_e.prob(t, s, a);
                std::size_t i = static_cast<std::size_t>(s) * A + a;
                if (pb > 0.0) {
                    eta[t][i] = pe / pb;
                } else {
                    eta[t][i] = 0.0;
                    if (diag && pe > 0.0) diag->add("eta_unsupported");
                    if (diag && pe == 0.0 && pb == 0.0) diag->add("eta_zero_over_zero");
                }
            }
    return eta;
}

/// All density ratios for a (behavior, evaluation) policy pair on one process.
///
/// Finite horizon: eta[t], w[t], mu[t] for t = 1..H (0-based index t-1), with
/// w_1 == 1 identically since both policies share p1. Stationary flavor:
/// eta/mu have a single slice and w_star/mu_star hold the discounted
/// visitation ratio against the sampling distribution p_b. The overlap
/// constants are computed, not assumed: c_eta = max eta and c_w = max w (or
/// max w*) over reachable states.
struct RatioSet {
    std::vector<std::vector<real_t>> eta;  ///< [t][s*A+a]
    std::vector<std::vector<real_t>> w;    ///< [t][s], finite horizon
    std::vector<std::vector<real_t>> mu;   ///< [t][s*A+a], finite horizon
    std::vector<real_t> w_star;            ///< [s], stationary
    std::vector<real_t> mu_star;           ///< [s*A+a], stationary
    real_t c_eta = 0.0;
    real_t c_w = 0.0;
    Diagnostics diag;

    /// Cumulative products lambda_t = prod_{k<=t} eta_k along one trajectory;
    /// element [0] is lambda_0 := 1 and element [t] is lambda_t.
    std::vector<real_t> cumulative_eta(const Trajectory& traj, int n_actions) const {
        std::vector<real_t> lam(traj.horizon() + 1, 1.0);
        for (int t = 0; t < traj.horizon(); ++t)
            lam[t + 1] =
                lam[t] *
                eta[std::min<std::size_t>(t, eta.size() - 1)]
                   [static_cast<std::size_t>(traj.states[t]) * n_actions + traj.actions[t]];
        return lam;
    }
};

/// Computes the full ratio set, checking overlap: a reachable (t,s,a) with
/// pi_e > 0 but pi_b = 0 raises a computation_error naming the offending
/// triple. Ratios with a zero denominator off the reachable set are 0 with a
/// diagnostics counter, never NaN.
inline RatioSet compute_ratios(const TabularDecisionProcess& mdp, const StochasticPolicy& pi_b,
                               const StochasticPolicy& pi_e) {
    mdp.check_policy(pi_b, "compute_ratios");
    mdp.check_policy(pi_e, "compute_ratios");
    const int S = mdp.n_states, A = mdp.n_actions;
    RatioSet out;
    if (mdp.is_finite()) {
        const int H = mdp.horizon;
        out.eta = compute_eta_tables(pi_b, pi_e, H, &out.diag);
        auto d_b = exact_marginals_finite(mdp, pi_b);
        auto d_e = exact_marginals_finite(mdp, pi_e);
        out.w.assign(H, std::vector<real_t>(S, 0.0));
        out.mu.assign(H, std::vector<real_t>(static_cast<std::size_t>(S) * A, 0.0));
        for (int t = 0; t < H; ++t) {
            for (int s = 0; s < S; ++s) {
                if (t == 0) {
                    out.w[0][s] = 1.0;  // shared initial distribution
                } else if (d_b[t][s] > 0.0) {
                    out.w[t][s] = d_e[t][s] / d_b[t][s];
                } else {
                    out.w[t][s] = 0.0;
                    if (d_e[t][s] > kProbTol)
                        throw computation_error(
                            "compute_ratios: no overlap, evaluation policy reaches state " +
                            std::to_string(s) + " at t=" + std::to_string(t + 1) +
                            " that the behavior policy cannot");
                    out.diag.add("w_zero_denominator");
                }
                for (int a = 0; a < A; ++a) {
                    if (d_b[t][s] > 0.0 && pi_e.prob(t, s, a) > 0.0 && pi_b.prob(t, s, a) == 0.0)
                        throw computation_error("compute_ratios: no overlap at (t=" +
                                                std::to_string(t + 1) + ", s=" + std::to_string(s) +
                                                ", a=" + std::to_string(a) + ")");
                    out.mu[t][mdp.sa(s, a)] = out.eta[t][mdp.sa(s, a)] * out.w[t][s];
                }
            }
        }
        for (int t = 0; t < H; ++t)
            for (int s = 0; s < S; ++s) {
                if (d_b[t][s] <= 0.0) continue;
                out.c_w = std::max(out.c_w, out.w[t][s]);
                for (int a = 0; a < A; ++a)
                    if (pi_b.prob(t, s, a) > 0.0)
                        out.c_eta = std::max(out.c_eta, out.eta[t][mdp.sa(s, a)]);
            }
    } else {
        out.eta = compute_eta_tables(pi_b, pi_e, 1, &out.diag);
        const std::vector<real_t>& pb = mdp.p_b();
        auto d_gamma = exact_discounted_visitation(mdp, pi_e);
        out.w_star.assign(S, 0.0);
        out.mu_star.assign(static_cast<std::size_t>(S) * A, 0.0);
        for (int s = 0; s < S; ++s) {
            if (pb[s] > 0.0) {
                out.w_star[s] = d_gamma[s] / pb[s];
            } else {
                out.w_star[s] = 0.0;
                if (d_gamma[s] > kProbTol)
                    throw computation_error(
                        "compute_ratios: no overlap, discounted visitation reaches state " +
                        std::to_string(s) + " outside the sampling distribution");
                out.diag.add("w_star_zero_denominator");
            }
            for (int a = 0; a < A; ++a) {
                if (pb[s] > 0.0 && pi_e.prob(0, s, a) > 0.0 && pi_b.prob(0, s, a) == 0.0)
                    throw computation_error("compute_ratios: no overlap at (s=" + std::to_string(s) +
                                            ", a=" + std::to_string(a) + ")");
                out.mu_star[mdp.sa(s, a)] = out.eta[0][mdp.sa(s, a)] * out.w_star[s];
            }
        }
        for (int s = 0; s < S; ++s) {
            if (pb[s] <= 0.0) continue;
            out.c_w = std::max(out.c_w, out.w_star[s]);
            for (int a = 0; a < A; ++a)
                if (pi_b.prob(0, s, a) > 0.0)
                    out.c_eta = std::max(out.c_eta, out.eta[0][mdp.sa(s, a)]);
        }
    }
    return out;
}

}  // namespace nspope

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "nsp_ope/enumeration.hpp"
#include "nsp_ope/estimators.hpp"
#include "nsp_ope/policies.hpp"

/// \file bounds.hpp
/// Exact evaluation of the efficient influence functions at oracle nuisances
/// and exact computation of the semiparametric efficiency bounds. Every bound
/// is an exact expectation (no Monte Carlo), computed from the
/// martingale-increment decomposition of the EIF, so the bounds can serve as
/// ground truth for estimator-variance tests.
///
/// The per-time terms are the conditional variances of the centered
/// increments; e.g. for tilting the t-th term is
/// E[var[mu_t (r_t + v_{t+1}(s_{t+1}) - v_t(s_t)) | s_t]], whose sum equals
/// var[EIF] exactly (the enumeration tests pin this down). The t = 0 term is
/// the initial-state variance var[v_1(s_1)] (tilting / pre-specified) or
/// var[q^tau_1(s_1, a_1)] (modified treatment), matching the mu_0 = 1,
/// v_0 = r_0 = 0 convention.

namespace nspope {

/// An efficiency bound with its per-time components, the inflation over the
/// pre-specified-policy bound, and the polynomial cap C C' R_max^2 H^2 where
/// it applies (finite horizon).
struct EfficiencyBounds {
    real_t value = 0.0;
    std::vector<real_t> per_time;  ///< finite horizon: terms t = 0..H
    real_t inflation_vs_prespecified = 0.0;
    std::optional<real_t> upper_bound_cap;
    real_t c_eta = 0.0;  ///< C, max instantaneous ratio over reachable pairs
    real_t c_w = 0.0;    ///< C', max marginal ratio over reachable states
};

/// EIF value at one trajectory (finite-horizon estimands; phi includes -J).
inline real_t eif_eval(const Trajectory& traj, const NuisanceSet& oracle, Estimand kind,
                       real_t j_value) {
    return phi_trajectory(traj, oracle, kind) - j_value;
}

/// EIF value at one transition tuple (stationary estimands; mean zero, no -J
/// term). V2 shares the tilting form evaluated at directly-estimated
/// nuisances, which at the oracle coincides with the TI2 EIF.
inline real_t eif_eval(const TransitionTuple& tup, const NuisanceSet& oracle, Estimand kind,
                       real_t gamma) {
    Estimand effective = (kind == Estimand::V2) ? Estimand::TI2 : kind;
    return phi_transition(tup, oracle, effective, gamma);
}

namespace detail {

/// Conditional variance of eta(s,.) (r + v_next - center) given s under
/// pi_b; the argument has conditional mean zero when center = v(s), so this
/// is a plain second moment.
inline real_t centered_state_term(const TabularDecisionProcess& mdp, const StochasticPolicy& pi_b,
                                  int t, int s, const std::vector<real_t>& eta,
                                  const std::vector<real_t>* v_next, real_t center) {
    real_t acc = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
        real_t pa = pi_b.prob(t, s, a);
        if (pa == 0.0) continue;
        real_t e = eta[mdp.sa(s, a)];
        for (const auto& atom : mdp.reward_dist(t, s, a)) {
            if (atom.prob == 0.0) continue;
            if (v_next) {
                for (int sn = 0; sn < mdp.n_states; ++sn) {
                    real_t pt = mdp.trans(t, s, a, sn);
                    if (pt == 0.0) continue;
                    real_t x = e * (atom.value + (*v_next)[sn] - center);
                    acc += pa * atom.prob * pt * x * x;
                }
            } else {
                real_t x = e * (atom.value - center);
                acc += pa * atom.prob * x * x;
            }
        }
    }
    return acc;
}

/// var[g(s', a') | s, a] where s' ~ P_t(.|s,a) and a' ~ pi_b(.|s').
inline real_t next_state_action_variance(const TabularDecisionProcess& mdp,
                                         const StochasticPolicy& pi_b, int t, int s, int a,
                                         const std::function<real_t(int, int)>& g) {
    real_t mean = 0.0, second = 0.0;
    for (int sn = 0; sn < mdp.n_states; ++sn) {
        real_t pt = mdp.trans(t, s, a, sn);
        if (pt == 0.0) continue;
        for (int an = 0; an < mdp.n_actions; ++an) {
            real_t pan = pi_b.prob(t + 1, sn, an);
            if (pan == 0.0) continue;
            real_t x = g(sn, an);
            mean += pt * pan * x;
            second += pt * pan * x * x;
        }
    }
    return second - mean * mean;
}

/// var[v(s') | s, a] where s' ~ P_t(.|s,a).
inline real_t next_state_variance(const TabularDecisionProcess& mdp, int t, int s, int a,
                                  const std::vector<real_t>& v) {
    real_t mean = 0.0, second = 0.0;
    for (int sn = 0; sn < mdp.n_states; ++sn) {
        real_t pt = mdp.trans(t, s, a, sn);
        if (pt == 0.0) continue;
        mean += pt * v[sn];
        second += pt * v[sn] * v[sn];
    }
    return second - mean * mean;
}

inline real_t distribution_variance(const std::vector<real_t>& dist,
                                    const std::function<real_t(int)>& f) {
    real_t mean = 0.0, second = 0.0;
    for (std::size_t s = 0; s < dist.size(); ++s) {
        if (dist[s] == 0.0) continue;
        real_t x = f(static_cast<int>(s));
        mean += dist[s] * x;
        second += dist[s] * x * x;
    }
    return second - mean * mean;
}

}  // namespace detail

/// Finite-horizon efficiency bounds: TI1 (tilting), MO1 (modified treatment),
/// and PR (the pre-specified-policy bound evaluated at this pi_e). The
/// inflation term realizes the bound-comparison identities
/// TI1 = PR + sum_t E[var[mu_t(q_t - v_t)|s_t]] and
/// MO1 = PR + sum_t E[mu_t^2 var[q^tau_{t+1}|s_{t+1}]].
inline EfficiencyBounds bound_finite(const TabularDecisionProcess& mdp,
                                     const StochasticPolicy& pi_b, const NaturalPolicySpec& spec,
                                     Estimand estimand) {
    mdp.require_finite("bound_finite");
    if (estimand != Estimand::TI1 && estimand != Estimand::MO1 && estimand != Estimand::PR)
        throw validation_error("bound_finite: estimand must be TI1, MO1, or PR");
    const int S = mdp.n_states, A = mdp.n_actions, H = mdp.horizon;
    StochasticPolicy pi_e = make_evaluation_policy(pi_b, spec);
    RatioSet ratios = compute_ratios(mdp, pi_b, pi_e);
    FiniteQV qv = exact_q_v_finite(mdp, pi_e);
    auto d_b = exact_marginals_finite(mdp, pi_b);
    const bool modified = estimand == Estimand::MO1;

    auto q_tau = [&](int t, int s, int a) {
        return qv.q[t][static_cast<std::size_t>(s) * A + spec.tau_at(t, s, a, A)];
    };

    EfficiencyBounds out;
    out.c_eta = ratios.c_eta;
    out.c_w = ratios.c_w;
    out.per_time.assign(H + 1, 0.0);

    // t = 0 term: initial-state variance under the mu_0 = 1 convention.
    if (modified) {
        real_t mean = 0.0, second = 0.0;
        for (int s = 0; s < S; ++s) {
            if (mdp.initial_dist[s] == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                real_t p = mdp.initial_dist[s] * pi_b.prob(0, s, a);
                if (p == 0.0) continue;
                real_t x = q_tau(0, s, a);
                mean += p * x;
                second += p * x * x;
            }
        }
        out.per_time[0] = second - mean * mean;
    } else {
        out.per_time[0] = detail::distribution_variance(
            mdp.initial_dist, [&](int s) { return qv.v[0][s]; });
    }

    real_t inflation = 0.0;
    if (modified) {
        // t = 0 inflation term: E[var[q^tau_1(s_1, .) | s_1]]
        for (int s = 0; s < S; ++s) {
            if (mdp.initial_dist[s] == 0.0) continue;
            real_t mean = 0.0, second = 0.0;
            for (int a = 0; a < A; ++a) {
                real_t pa = pi_b.prob(0, s, a);
                real_t x = q_tau(0, s, a);
                mean += pa * x;
                second += pa * x * x;
            }
            inflation += mdp.initial_dist[s] * (second - mean * mean);
        }
    }

    for (int tt = 0; tt < H; ++tt) {  // tt is 0-based; paper time t = tt+1
        const std::vector<real_t>* v_next = (tt + 1 < H) ? &qv.v[tt + 1] : nullptr;
        real_t term = 0.0, infl_term = 0.0;
        for (int s = 0; s < S; ++s) {
            if (d_b[tt][s] == 0.0) continue;
            if (estimand == Estimand::TI1) {
                real_t w2 = ratios.w[tt][s] * ratios.w[tt][s];
                term += d_b[tt][s] * w2 *
                        detail::centered_state_term(mdp, pi_b, tt, s, ratios.eta[tt], v_next,
                                                    qv.v[tt][s]);
                // inflation: E[var[mu_t (q_t - v_t) | s_t]] (mean zero given s_t)
                real_t acc = 0.0;
                for (int a = 0; a < A; ++a) {
                    real_t pa = pi_b.prob(tt, s, a);
                    if (pa == 0.0) continue;
                    real_t x = ratios.mu[tt][mdp.sa(s, a)] *
                               (qv.q[tt][mdp.sa(s, a)] - qv.v[tt][s]);
                    acc += pa * x * x;
                }
                infl_term += d_b[tt][s] * acc;
            } else {
                for (int a = 0; a < A; ++a) {
                    real_t pa = pi_b.prob(tt, s, a);
                    if (pa == 0.0) continue;
                    real_t mu2 = ratios.mu[tt][mdp.sa(s, a)] * ratios.mu[tt][mdp.sa(s, a)];
                    if (mu2 == 0.0) continue;
                    real_t var_future;
                    real_t weight = d_b[tt][s] * pa * mu2;
                    if (modified) {
                        var_future =
                            (tt + 1 < H)
                                ? detail::next_state_action_variance(
                                      mdp, pi_b, tt, s, a,
                                      [&](int sn, int an) { return q_tau(tt + 1, sn, an); })
                                : 0.0;
                        // inflation: E[mu_t^2 var[q^tau_{t+1} | s_{t+1}]]
                        if (tt + 1 < H) {
                            real_t acc = 0.0;
                            for (int sn = 0; sn < S; ++sn) {
                                real_t pt = mdp.trans(tt, s, a, sn);
                                if (pt == 0.0) continue;
                                real_t mean = 0.0, second = 0.0;
                                for (int an = 0; an < A; ++an) {
                                    real_t pan = pi_b.prob(tt + 1, sn, an);
                                    real_t x = q_tau(tt + 1, sn, an);
                                    mean += pan * x;
                                    second += pan * x * x;
                                }
                                acc += pt * (second - mean * mean);
                            }
                            infl_term += weight * acc;
                        }
                    } else {  // PR
                        var_future = (tt + 1 < H)
                                         ? detail::next_state_variance(mdp, tt, s, a, qv.v[tt + 1])
                                         : 0.0;
                    }
                    term += weight * (mdp.reward_variance(tt, s, a) + var_future);
                }
            }
        }
        out.per_time[tt + 1] = term;
        inflation += infl_term;
    }
    out.value = 0.0;
    for (real_t x : out.per_time) out.value += x;
    out.inflation_vs_prespecified = (estimand == Estimand::PR) ? 0.0 : inflation;
    out.upper_bound_cap =
        ratios.c_eta * ratios.c_w * mdp.r_max * mdp.r_max * static_cast<real_t>(H) * H;
    return out;
}

/// Stationary-discounted efficiency bounds: TI2 (tilting), MO2 (modified
/// treatment), PR (pre-specified at this pi_e). Expectations are under
/// p_b(s) pi_b(a|s) p(r|s,a) p(s'|s,a) pi_b(a'|s').
inline EfficiencyBounds bound_discounted(const TabularDecisionProcess& mdp,
                                         const StochasticPolicy& pi_b,
                                         const NaturalPolicySpec& spec, Estimand estimand) {
    mdp.require_discounted("bound_discounted");
    if (estimand != Estimand::TI2 && estimand != Estimand::MO2 && estimand != Estimand::PR)
        throw validation_error("bound_discounted: estimand must be TI2, MO2, or PR");
    const int S = mdp.n_states, A = mdp.n_actions;
    const real_t gamma = mdp.gamma;
    StochasticPolicy pi_e = make_evaluation_policy(pi_b, spec);
    RatioSet ratios = compute_ratios(mdp, pi_b, pi_e);
    StationaryQV qv = exact_q_v_discounted(mdp, pi_e);
    const std::vector<real_t>& pb = mdp.p_b();

    auto q_tau = [&](int s, int a) {
        return qv.q[static_cast<std::size_t>(s) * A + spec.tau_at(0, s, a, A)];
    };
    auto scaled_v = [&](int sn) { return gamma * qv.v[sn]; };

    EfficiencyBounds out;
    out.c_eta = ratios.c_eta;
    out.c_w = ratios.c_w;
    real_t value = 0.0, pr_value = 0.0;
    for (int s = 0; s < S; ++s) {
        if (pb[s] == 0.0) continue;
        // PR component (shared by the inflation computation)
        real_t pr_state = 0.0;
        for (int a = 0; a < A; ++a) {
            real_t pa = pi_b.prob(0, s, a);
            if (pa == 0.0) continue;
            real_t mu2 = ratios.mu_star[mdp.sa(s, a)] * ratios.mu_star[mdp.sa(s, a)];
            real_t var_v = 0.0;
            {
                real_t mean = 0.0, second = 0.0;
                for (int sn = 0; sn < S; ++sn) {
                    real_t pt = mdp.trans(0, s, a, sn);
                    if (pt == 0.0) continue;
                    mean += pt * scaled_v(sn);
                    second += pt * scaled_v(sn) * scaled_v(sn);
                }
                var_v = second - mean * mean;
            }
            pr_state += pa * mu2 * (mdp.reward_variance(0, s, a) + var_v);
        }
        pr_value += pb[s] * pr_state;

        if (estimand == Estimand::TI2) {
            // E[var[mu*(s,a)(r + gamma v(s') - v(s)) | s]]; mean zero given s.
            real_t acc = 0.0;
            for (int a = 0; a < A; ++a) {
                real_t pa = pi_b.prob(0, s, a);
                if (pa == 0.0) continue;
                real_t mu = ratios.mu_star[mdp.sa(s, a)];
                for (const auto& atom : mdp.reward_dist(0, s, a)) {
                    if (atom.prob == 0.0) continue;
                    for (int sn = 0; sn < S; ++sn) {
                        real_t pt = mdp.trans(0, s, a, sn);
                        if (pt == 0.0) continue;
                        real_t x = mu * (atom.value + gamma * qv.v[sn] - qv.v[s]);
                        acc += pa * atom.prob * pt * x * x;
                    }
                }
            }
            value += pb[s] * acc;
        } else if (estimand == Estimand::MO2) {
            real_t acc = 0.0;
            for (int a = 0; a < A; ++a) {
                real_t pa = pi_b.prob(0, s, a);
                if (pa == 0.0) continue;
                real_t mu2 = ratios.mu_star[mdp.sa(s, a)] * ratios.mu_star[mdp.sa(s, a)];
                real_t mean = 0.0, second = 0.0;
                for (int sn = 0; sn < S; ++sn) {
                    real_t pt = mdp.trans(0, s, a, sn);
                    if (pt == 0.0) continue;
                    for (int an = 0; an < A; ++an) {
                        real_t pan = pi_b.prob(0, sn, an);
                        if (pan == 0.0) continue;
                        real_t x = gamma * q_tau(sn, an);
                        mean += pt * pan * x;
                        second += pt * pan * x * x;
                    }
                }
                acc += pa * mu2 * (mdp.reward_variance(0, s, a) + (second - mean * mean));
            }
            value += pb[s] * acc;
        }
    }
    if (estimand == Estimand::PR) {
        out.value = pr_value;
        out.inflation_vs_prespecified = 0.0;
    } else {
        out.value = value;
        out.inflation_vs_prespecified = value - pr_value;
    }
    out.per_time = {out.value};
    return out;
}

}  // namespace nspope

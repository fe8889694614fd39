#pragma once

#include <functional>
#include <vector>

#include "nsp_ope/mdp.hpp"

/// \file enumeration.hpp
/// Exhaustive enumeration of trajectory and transition laws on small
/// instances. These drive the enumeration-oracle identity checks (EIF means,
/// bound-equals-variance, estimator unbiasedness) and the selftest suite.

namespace nspope {

/// Visits every trajectory with positive probability under (mdp, policy),
/// passing the trajectory and its exact probability. Intended for small
/// instances; the path count grows like (S*A*R)^H.
inline void enumerate_trajectories(
    const TabularDecisionProcess& mdp, const StochasticPolicy& policy,
    const std::function<void(const Trajectory&, real_t)>& visit) {
    mdp.require_finite("enumerate_trajectories");
    mdp.check_policy(policy, "enumerate_trajectories");
    Trajectory traj;
    traj.states.resize(mdp.horizon + 1);
    traj.actions.resize(mdp.horizon);
    traj.rewards.resize(mdp.horizon);

    std::function<void(int, real_t)> walk = [&](int t, real_t prob) {
        if (prob == 0.0) return;
        if (t == mdp.horizon) {
            visit(traj, prob);
            return;
        }
        int s = traj.states[t];
        for (int a = 0; a < mdp.n_actions; ++a) {
            real_t pa = policy.prob(t, s, a);
            if (pa == 0.0) continue;
            traj.actions[t] = a;
            for (const auto& atom : mdp.reward_dist(t, s, a)) {
                if (atom.prob == 0.0) continue;
                traj.rewards[t] = atom.value;
                for (int sn = 0; sn < mdp.n_states; ++sn) {
                    real_t pt = mdp.trans(t, s, a, sn);
                    if (pt == 0.0) continue;
                    traj.states[t + 1] = sn;
                    walk(t + 1, prob * pa * atom.prob * pt);
                }
            }
        }
    };
    for (int s1 = 0; s1 < mdp.n_states; ++s1) {
        traj.states[0] = s1;
        walk(0, mdp.initial_dist[s1]);
    }
}

/// Visits every transition tuple (s,a,r,s',a') with positive probability
/// under p_b(s) pi_b(a|s) p(r|s,a) p(s'|s,a) pi_b(a'|s').
inline void enumerate_transitions(
    const TabularDecisionProcess& mdp, const StochasticPolicy& pi_b,
    const std::function<void(const TransitionTuple&, real_t)>& visit) {
    mdp.require_discounted("enumerate_transitions");
    mdp.check_policy(pi_b, "enumerate_transitions");
    const std::vector<real_t>& pb = mdp.p_b();
    for (int s = 0; s < mdp.n_states; ++s) {
        if (pb[s] == 0.0) continue;
        for (int a = 0; a < mdp.n_actions; ++a) {
            real_t pa = pi_b.prob(0, s, a);
            if (pa == 0.0) continue;
            for (const auto& atom : mdp.reward_dist(0, s, a)) {
                if (atom.prob == 0.0) continue;
                for (int sn = 0; sn < mdp.n_states; ++sn) {
                    real_t pt = mdp.trans(0, s, a, sn);
                    if (pt == 0.0) continue;
                    for (int an = 0; an < mdp.n_actions; ++an) {
                        real_t pan = pi_b.prob(0, sn, an);
                        if (pan == 0.0) continue;
                        visit({s, a, atom.value, sn, an},
                              pb[s] * pa * atom.prob * pt * pan);
                    }
                }
            }
        }
    }
}

/// Exact mean and variance of a trajectory functional under (mdp, policy).
inline std::pair<real_t, real_t> trajectory_moments(
    const TabularDecisionProcess& mdp, const StochasticPolicy& policy,
    const std::function<real_t(const Trajectory&)>& f) {
    real_t mean = 0.0, second = 0.0, mass = 0.0;
    enumerate_trajectories(mdp, policy, [&](const Trajectory& traj, real_t p) {
        real_t x = f(traj);
        mean += p * x;
        second += p * x * x;
        mass += p;
    });
    if (std::abs(mass - 1.0) > 1e-9)
        throw computation_error("trajectory_moments: enumerated mass " + std::to_string(mass));
    return {mean, second - mean * mean};
}

/// Exact mean and variance of a transition-tuple functional under p_b.
inline std::pair<real_t, real_t> transition_moments(
    const TabularDecisionProcess& mdp, const StochasticPolicy& pi_b,
    const std::function<real_t(const TransitionTuple&)>& f) {
    real_t mean = 0.0, second = 0.0, mass = 0.0;
    enumerate_transitions(mdp, pi_b, [&](const TransitionTuple& tup, real_t p) {
        real_t x = f(tup);
        mean += p * x;
        second += p * x * x;
        mass += p;
    });
    if (std::abs(mass - 1.0) > 1e-9)
        throw computation_error("transition_moments: enumerated mass " + std::to_string(mass));
    return {mean, second - mean * mean};
}

}  // namespace nspope

#pragma once

#include <random>
#include <vector>

#include "nsp_ope/mdp.hpp"

/// \file simulate.hpp
/// Trajectory and transition samplers. All draws run through the library's
/// own categorical sampler, so a dataset is a bit-reproducible function of
/// (process, policy, n, seed).

namespace nspope {

namespace detail {

inline int sample_action(std::mt19937_64& rng, const StochasticPolicy& pi, int t, int s) {
    const auto& slice = pi.slice(t);
    return sample_index(rng, std::span<const real_t>(
                                 slice.data() + static_cast<std::size_t>(s) * pi.n_actions(),
                                 static_cast<std::size_t>(pi.n_actions())));
}

inline int sample_next_state(std::mt19937_64& rng, const TabularDecisionProcess& mdp, int t,
                             int s, int a) {
    const auto& k = mdp.kernel(t);
    return sample_index(rng, std::span<const real_t>(k.data() + mdp.sa(s, a) * mdp.n_states,
                                                     static_cast<std::size_t>(mdp.n_states)));
}

inline real_t sample_reward(std::mt19937_64& rng, const TabularDecisionProcess& mdp, int t,
                            int s, int a) {
    const RewardDist& dist = mdp.reward_dist(t, s, a);
    if (dist.size() == 1) return dist[0].value;
    real_t u = uniform01(rng), acc = 0.0;
    for (const auto& atom : dist) {
        acc += atom.prob;
        if (u < acc) return atom.value;
    }
    return dist.back().value;
}

}  // namespace detail

/// Simulates n i.i.d. trajectories of length H under (mdp, policy).
inline Dataset simulate_finite(const TabularDecisionProcess& mdp, const StochasticPolicy& policy,
                               std::size_t n, std::uint64_t seed) {
    mdp.require_finite("simulate_finite");
    mdp.check_policy(policy, "simulate_finite");
    if (n == 0) throw validation_error("simulate_finite: empty dataset requested");
    std::mt19937_64 rng(seed);
    Dataset out;
    out.kind = DatasetKind::trajectories;
    out.n_states = mdp.n_states;
    out.n_actions = mdp.n_actions;
    out.horizon = mdp.horizon;
    out.seed = seed;
    out.trajectories.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Trajectory traj;
        traj.states.reserve(mdp.horizon + 1);
        traj.actions.reserve(mdp.horizon);
        traj.rewards.reserve(mdp.horizon);
        int s = sample_index(rng, mdp.initial_dist);
        traj.states.push_back(s);
        for (int t = 0; t < mdp.horizon; ++t) {
            int a = detail::sample_action(rng, policy, t, s);
            real_t r = detail::sample_reward(rng, mdp, t, s, a);
            int sn = detail::sample_next_state(rng, mdp, t, s, a);
            traj.actions.push_back(a);
            traj.rewards.push_back(r);
            traj.states.push_back(sn);
            s = sn;
        }
        out.trajectories.push_back(std::move(traj));
    }
    return out;
}

/// Samples n transition tuples (s,a,r,s',a') from a single chain under the
/// behavior policy, started from the sampling distribution p_b and advanced
/// burn_in steps first. Consecutive tuples share the chain (a' of tuple i is
/// the action of tuple i+1). Non-ergodic chains are not detected; ensuring
/// the chain mixes is the caller's responsibility.
inline Dataset simulate_stationary(const TabularDecisionProcess& mdp,
                                   const StochasticPolicy& policy, std::size_t n,
                                   std::size_t burn_in, std::uint64_t seed) {
    mdp.require_discounted("simulate_stationary");
    mdp.check_policy(policy, "simulate_stationary");
    if (n == 0) throw validation_error("simulate_stationary: empty dataset requested");
    std::mt19937_64 rng(seed);
    Dataset out;
    out.kind = DatasetKind::transitions;
    out.n_states = mdp.n_states;
    out.n_actions = mdp.n_actions;
    out.seed = seed;
    out.transitions.reserve(n);
    int s = sample_index(rng, mdp.p_b());
    for (std::size_t i = 0; i < burn_in; ++i) {
        int a = detail::sample_action(rng, policy, 0, s);
        s = detail::sample_next_state(rng, mdp, 0, s, a);
    }
    int a = detail::sample_action(rng, policy, 0, s);
    for (std::size_t i = 0; i < n; ++i) {
        real_t r = detail::sample_reward(rng, mdp, 0, s, a);
        int sn = detail::sample_next_state(rng, mdp, 0, s, a);
        int an = detail::sample_action(rng, policy, 0, sn);
        out.transitions.push_back({s, a, r, sn, an});
        s = sn;
        a = an;
    }
    return out;
}

/// Samples n independent transition tuples with s drawn fresh from p_b for
/// each tuple. This realizes the i.i.d. sampling model under which the
/// stationary efficiency bounds are stated; the chain sampler above matches
/// the single-trajectory experimental protocol instead.
inline Dataset simulate_transitions_iid(const TabularDecisionProcess& mdp,
                                        const StochasticPolicy& policy, std::size_t n,
                                        std::uint64_t seed) {
    mdp.require_discounted("simulate_transitions_iid");
    mdp.check_policy(policy, "simulate_transitions_iid");
    if (n == 0) throw validation_error("simulate_transitions_iid: empty dataset requested");
    std::mt19937_64 rng(seed);
    Dataset out;
    out.kind = DatasetKind::transitions;
    out.n_states = mdp.n_states;
    out.n_actions = mdp.n_actions;
    out.seed = seed;
    out.transitions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int s = sample_index(rng, mdp.p_b());
        int a = detail::sample_action(rng, policy, 0, s);
        real_t r = detail::sample_reward(rng, mdp, 0, s, a);
        int sn = detail::sample_next_state(rng, mdp, 0, s, a);
        int an = detail::sample_action(rng, policy, 0, sn);
        out.transitions.push_back({s, a, r, sn, an});
    }
    return out;
}

}  // namespace nspope

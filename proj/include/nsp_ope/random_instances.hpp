#pragma once

#include <random>
#include <vector>

#include "nsp_ope/mdp.hpp"

/// \file random_instances.hpp
/// Seeded random test instances: small processes with stochastic transitions
/// and two-atom reward distributions (so conditional variances are
/// nondegenerate), plus random interior policies. Used by the selftest suite
/// and the test binaries.

namespace nspope {

/// Random probability vector with entries bounded away from zero.
inline std::vector<real_t> random_distribution(std::mt19937_64& rng, int n, real_t floor = 0.05) {
    std::vector<real_t> p(n);
    real_t total = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = floor + uniform01(rng);
        total += p[i];
    }
    for (auto& x : p) x /= total;
    return p;
}

inline std::vector<RewardDist> random_reward_slice(std::mt19937_64& rng, int n_states,
                                                   int n_actions, real_t r_max) {
    std::vector<RewardDist> out(static_cast<std::size_t>(n_states) * n_actions);
    for (auto& dist : out) {
        real_t lo = uniform01(rng) * r_max * 0.5;
        real_t hi = r_max * (0.5 + 0.5 * uniform01(rng));
        real_t p = 0.2 + 0.6 * uniform01(rng);
        dist = RewardDist{{lo, p}, {hi, 1.0 - p}};
    }
    return out;
}

inline TabularDecisionProcess random_finite_mdp(std::uint64_t seed, int n_states, int n_actions,
                                                int horizon, bool time_varying = false,
                                                real_t r_max = 1.0) {
    std::mt19937_64 rng(seed);
    TabularDecisionProcess mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.flavor = Flavor::finite_horizon;
    mdp.horizon = horizon;
    mdp.time_varying = time_varying;
    mdp.r_max = r_max;
    const int slices = time_varying ? horizon : 1;
    for (int t = 0; t < slices; ++t) {
        std::vector<real_t> kernel;
        kernel.reserve(static_cast<std::size_t>(n_states) * n_states * n_actions);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a) {
                auto row = random_distribution(rng, n_states);
                kernel.insert(kernel.end(), row.begin(), row.end());
            }
        mdp.transition.push_back(std::move(kernel));
        mdp.rewards.push_back(random_reward_slice(rng, n_states, n_actions, r_max));
    }
    mdp.initial_dist = random_distribution(rng, n_states);
    mdp.validate();
    return mdp;
}

inline TabularDecisionProcess random_discounted_mdp(std::uint64_t seed, int n_states,
                                                    int n_actions, real_t gamma,
                                                    real_t r_max = 1.0) {
    std::mt19937_64 rng(seed);
    TabularDecisionProcess mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.flavor = Flavor::stationary_discounted;
    mdp.gamma = gamma;
    mdp.r_max = r_max;
    std::vector<real_t> kernel;
    kernel.reserve(static_cast<std::size_t>(n_states) * n_states * n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            auto row = random_distribution(rng, n_states);
            kernel.insert(kernel.end(), row.begin(), row.end());
        }
    mdp.transition.push_back(std::move(kernel));
    mdp.rewards.push_back(random_reward_slice(rng, n_states, n_actions, r_max));
    mdp.initial_dist = random_distribution(rng, n_states);
    mdp.sampling_dist = random_distribution(rng, n_states);
    mdp.validate();
    return mdp;
}

/// Random time-invariant policy with all probabilities at least `floor`/|A|.
inline StochasticPolicy random_policy(std::uint64_t seed, int n_states, int n_actions,
                                      real_t floor = 0.15) {
    std::mt19937_64 rng(seed);
    std::vector<real_t> slice;
    slice.reserve(static_cast<std::size_t>(n_states) * n_actions);
    for (int s = 0; s < n_states; ++s) {
        auto row = random_distribution(rng, n_actions, floor);
        slice.insert(slice.end(), row.begin(), row.end());
    }
    return StochasticPolicy(n_states, n_actions, {std::move(slice)});
}

/// Random strictly positive tilting weights in [0.5, 2.5].
inline std::vector<real_t> random_tilt_weights(std::uint64_t seed, int n_actions) {
    std::mt19937_64 rng(seed);
    std::vector<real_t> u(n_actions);
    for (auto& x : u) x = 0.5 + 2.0 * uniform01(rng);
    return u;
}

/// Random permutation tau per state.
inline std::vector<int> random_tau(std::uint64_t seed, int n_states, int n_actions) {
    std::mt19937_64 rng(seed);
    std::vector<int> tau(static_cast<std::size_t>(n_states) * n_actions);
    for (int s = 0; s < n_states; ++s) {
        std::vector<int> perm(n_actions);
        for (int a = 0; a < n_actions; ++a) perm[a] = a;
        for (int i = n_actions; i > 1; --i) {
            int j = static_cast<int>(uniform01(rng) * i);
            if (j >= i) j = i - 1;
            std::swap(perm[i - 1], perm[j]);
        }
        for (int a = 0; a < n_actions; ++a) tau[static_cast<std::size_t>(s) * n_actions + a] = perm[a];
    }
    return tau;
}

}  // namespace nspope

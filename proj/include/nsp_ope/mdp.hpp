#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nsp_ope/common.hpp"

/// \file mdp.hpp
/// Tabular decision-process model: finite-horizon (possibly time-varying)
/// or stationary-discounted, with finite-support reward distributions, plus
/// the stochastic-policy and dataset types.

namespace nspope {

/// One atom of a finite-support reward distribution.
struct RewardAtom {
    real_t value = 0.0;
    real_t prob = 0.0;
};

/// Finite-support reward distribution for one (t,s,a) cell.
using RewardDist = std::vector<RewardAtom>;

enum class Flavor {
    finite_horizon,
    stationary_discounted,
};

/// Per-time (or stationary) state-conditional action distributions.
///
/// `probs` holds one slice per decision time; a single slice means the policy
/// is time-invariant. Each slice is row-major over states: slice[s*A + a].
class StochasticPolicy {
public:
    StochasticPolicy() = default;
    StochasticPolicy(int n_states, int n_actions, std::vector<std::vector<real_t>> probs)
        : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
        validate();
    }

    /// Uniform time-invariant policy.
    static StochasticPolicy uniform(int n_states, int n_actions) {
        std::vector<real_t> slice(static_cast<std::size_t>(n_states) * n_actions,
                                  1.0 / n_actions);
        return StochasticPolicy(n_states, n_actions, {slice});
    }

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    bool time_invariant() const { return probs_.size() == 1; }
    int n_slices() const { return static_cast<int>(probs_.size()); }

    /// pi_t(a|s); a time index beyond the stored slices clamps to the last
    /// slice, so stationary policies can be queried at any t.
    real_t prob(int t, int s, int a) const {
        const auto& p = slice(t);
        return p[static_cast<std::size_t>(s) * n_actions_ + a];
    }

    const std::vector<real_t>& slice(int t) const {
        return probs_[std::min<std::size_t>(t, probs_.size() - 1)];
    }
    std::vector<std::vector<real_t>>& raw() { return probs_; }
    const std::vector<std::vector<real_t>>& raw() const { return probs_; }

    void validate() const {
        if (n_states_ <= 0 || n_actions_ <= 0)
            throw validation_error("policy: n_states and n_actions must be positive");
        if (probs_.empty()) throw validation_error("policy: no probability slices");
        for (std::size_t t = 0; t < probs_.size(); ++t) {
            if (probs_[t].size() != static_cast<std::size_t>(n_states_) * n_actions_)
                throw validation_error("policy: slice " + std::to_string(t) + " has wrong size");
            for (int s = 0; s < n_states_; ++s) {
                real_t row = 0.0;
                for (int a = 0; a < n_actions_; ++a) {
                    real_t p = probs_[t][static_cast<std::size_t>(s) * n_actions_ + a];
                    if (p < 0.0)
                        throw validation_error("policy: negative probability at (t=" +
                                               std::to_string(t) + ", s=" + std::to_string(s) +
                                               ", a=" + std::to_string(a) + ")");
                    row += p;
                }
                if (std::abs(row - 1.0) > kProbTol)
                    throw validation_error("policy: row (t=" + std::to_string(t) +
                                           ", s=" + std::to_string(s) + ") sums to " +
                                           std::to_string(row) + ", expected 1");
            }
        }
    }

private:
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<std::vector<real_t>> probs_;
};

/// Finite state/action decision process.
///
/// A single type covers both flavors; operations assert the flavor they need.
/// Transition kernels are stored row-major as kernel[(s*A + a)*S + s'], one
/// kernel per decision time for time-varying finite-horizon models and a
/// single shared kernel otherwise. Reward distributions have finite support
/// with values in [0, r_max].
///
/// `initial_dist` is p1 (finite horizon) or the estimand's initial
/// distribution p_e1 (discounted); `sampling_dist` is the distribution p_b the
/// stationary transition data is drawn from (discounted flavor only; defaults
/// to `initial_dist`).
class TabularDecisionProcess {
public:
    TabularDecisionProcess() = default;

    int n_states = 0;
    int n_actions = 0;
    Flavor flavor = Flavor::finite_horizon;
    int horizon = 0;           ///< H; finite-horizon flavor only
    bool time_varying = false; ///< finite-horizon flavor only
    real_t gamma = 0.0;        ///< discounted flavor only
    real_t r_max = 0.0;

    /// One kernel per time slice (size 1 when shared/stationary).
    std::vector<std::vector<real_t>> transition;
    /// rewards[t][s*A+a] -> finite-support distribution (size-1 outer vector
    /// when shared/stationary).
    std::vector<std::vector<RewardDist>> rewards;
    std::vector<real_t> initial_dist;
    std::vector<real_t> sampling_dist;

    std::size_t sa(int s, int a) const { return static_cast<std::size_t>(s) * n_actions + a; }

    const std::vector<real_t>& kernel(int t) const {
        return transition[std::min<std::size_t>(t, transition.size() - 1)];
    }
    /// P_t(s'|s,a)
    real_t trans(int t, int s, int a, int s_next) const {
        return kernel(t)[sa(s, a) * n_states + s_next];
    }
    const RewardDist& reward_dist(int t, int s, int a) const {
        return rewards[std::min<std::size_t>(t, rewards.size() - 1)][sa(s, a)];
    }
    real_t mean_reward(int t, int s, int a) const {
        real_t m = 0.0;
        for (const auto& atom : reward_dist(t, s, a)) m += atom.value * atom.prob;
        return m;
    }
    real_t reward_variance(int t, int s, int a) const {
        real_t m = mean_reward(t, s, a), v = 0.0;
        for (const auto& atom : reward_dist(t, s, a)) v += atom.prob * (atom.value - m) * (atom.value - m);
        return v;
    }
    const std::vector<real_t>& p_b() const {
        return sampling_dist.empty() ? initial_dist : sampling_dist;
    }

    bool is_finite() const { return flavor == Flavor::finite_horizon; }

    void require_finite(const char* op) const {
        if (!is_finite())
            throw validation_error(std::string(op) + ": requires a finite-horizon process");
    }
    void require_discounted(const char* op) const {
        if (is_finite())
            throw validation_error(std::string(op) + ": requires a stationary-discounted process");
    }

    /// Number of distinct decision times for kernel/reward storage.
    int n_time_slices() const {
        return (is_finite() && time_varying) ? horizon : 1;
    }

    void validate() const {
        if (n_states <= 0 || n_actions <= 0)
            throw validation_error("mdp: n_states and n_actions must be positive");
        if (is_finite()) {
            if (horizon <= 0) throw validation_error("mdp: horizon must be positive");
        } else {
            if (!(gamma > 0.0 && gamma < 1.0))
                throw validation_error("mdp: gamma must lie in (0,1)");
        }
        if (r_max < 0.0) throw validation_error("mdp: r_max must be nonnegative");
        const std::size_t expected = static_cast<std::size_t>(n_time_slices());
        if (transition.size() != expected)
            throw validation_error("mdp: expected " + std::to_string(expected) +
                                   " transition kernels, got " + std::to_string(transition.size()));
        if (rewards.size() != expected)
            throw validation_error("mdp: expected " + std::to_string(expected) +
                                   " reward slices, got " + std::to_string(rewards.size()));
        const std::size_t rowlen = static_cast<std::size_t>(n_states);
        for (std::size_t t = 0; t < transition.size(); ++t) {
            if (transition[t].size() != rowlen * n_states * n_actions)
                throw validation_error("mdp: transition kernel " + std::to_string(t) + " has wrong size");
            for (int s = 0; s < n_states; ++s)
                for (int a = 0; a < n_actions; ++a) {
                    real_t row = 0.0;
                    for (int sn = 0; sn < n_states; ++sn) {
                        real_t p = transition[t][sa(s, a) * n_states + sn];
                        if (p < 0.0)
                            throw validation_error("mdp: negative transition probability at (t=" +
                                                   std::to_string(t) + ", s=" + std::to_string(s) +
                                                   ", a=" + std::to_string(a) + ")");
                        row += p;
                    }
                    if (std::abs(row - 1.0) > kProbTol)
                        throw validation_error("mdp: transition row (t=" + std::to_string(t) +
                                               ", s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                                               ") sums to " + std::to_string(row));
                }
        }
        for (std::size_t t = 0; t < rewards.size(); ++t) {
            if (rewards[t].size() != static_cast<std::size_t>(n_states) * n_actions)
                throw validation_error("mdp: reward slice " + std::to_string(t) + " has wrong size");
            for (int s = 0; s < n_states; ++s)
                for (int a = 0; a < n_actions; ++a) {
                    real_t mass = 0.0;
                    for (const auto& atom : rewards[t][sa(s, a)]) {
                        if (atom.prob < 0.0)
                            throw validation_error("mdp: negative reward probability");
                        if (atom.value < -kProbTol || atom.value > r_max + kProbTol)
                            throw validation_error("mdp: reward value outside [0, r_max] at (s=" +
                                                   std::to_string(s) + ", a=" + std::to_string(a) + ")");
                        mass += atom.prob;
                    }
                    if (std::abs(mass - 1.0) > kProbTol)
                        throw validation_error("mdp: reward distribution at (s=" + std::to_string(s) +
                                               ", a=" + std::to_string(a) + ") sums to " +
                                               std::to_string(mass));
                }
        }
        check_dist(initial_dist, "initial_dist");
        if (!sampling_dist.empty()) {
            if (is_finite())
                throw validation_error("mdp: sampling_dist only applies to the discounted flavor");
            check_dist(sampling_dist, "sampling_dist");
        }
    }

    void check_policy(const StochasticPolicy& pi, const char* who) const {
        if (pi.n_states() != n_states || pi.n_actions() != n_actions)
            throw validation_error(std::string(who) + ": policy dimensions do not match the process");
    }

private:
    void check_dist(const std::vector<real_t>& d, const char* name) const {
        if (d.size() != static_cast<std::size_t>(n_states))
            throw validation_error(std::string("mdp: ") + name + " has wrong length");
        real_t total = 0.0;
        for (real_t p : d) {
            if (p < 0.0) throw validation_error(std::string("mdp: ") + name + " has a negative entry");
            total += p;
        }
        if (std::abs(total - 1.0) > kProbTol)
            throw validation_error(std::string("mdp: ") + name + " sums to " + std::to_string(total));
    }
};

/// One finite-horizon episode: states s_1..s_{H+1}, actions a_1..a_H,
/// rewards r_1..r_H. The terminal state s_{H+1} is kept because the
/// finite-horizon estimators evaluate fitted values at every visited state.
struct Trajectory {
    std::vector<int> states;    ///< length H+1
    std::vector<int> actions;   ///< length H
    std::vector<real_t> rewards;///< length H

    int horizon() const { return static_cast<int>(actions.size()); }
    int terminal_state() const { return states.back(); }
};

/// One stationary transition sample (s, a, r, s', a').
struct TransitionTuple {
    int s = 0;
    int a = 0;
    real_t r = 0.0;
    int s_next = 0;
    int a_next = 0;
};

enum class DatasetKind { trajectories, transitions };

/// A simulated or imported dataset, tagged with the index ranges it was
/// generated over and the seed that produced it.
struct Dataset {
    DatasetKind kind = DatasetKind::trajectories;
    std::vector<Trajectory> trajectories;
    std::vector<TransitionTuple> transitions;
    int n_states = 0;
    int n_actions = 0;
    int horizon = 0;  ///< trajectories only
    std::uint64_t seed = 0;

    std::size_t size() const {
        return kind == DatasetKind::trajectories ? trajectories.size() : transitions.size();
    }
    void require_kind(DatasetKind k, const char* op) const {
        if (kind != k)
            throw validation_error(std::string(op) + ": dataset has the wrong kind");
        if (size() == 0) throw validation_error(std::string(op) + ": dataset is empty");
    }
};

}  // namespace nspope

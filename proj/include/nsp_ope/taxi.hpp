#pragma once

#include <array>
#include <string>
#include <vector>

#include "nsp_ope/mdp.hpp"

/// \file taxi.hpp
/// Taxi gridworld builders and tabular q-learning. Two encodings of the 5x5
/// map are provided:
///
///  - "taxi-small": the classic single-passenger encoding,
///    25 positions x 5 passenger locations (4 landmarks + in taxi) x
///    4 destinations = 500 states. On a successful dropoff the episode
///    continues with a fresh passenger/destination pair (uniform over the 12
///    combinations with distinct landmarks), making the process stationary.
///  - "taxi-2000": a multi-passenger encoding, 25 positions x 2^4
///    waiting-passenger flags x 5 taxi statuses (empty or carrying toward
///    one of 4 landmarks) = 2000 states; waiting passengers appear at empty
///    landmarks independently with probability 0.25 per step.
///
/// Both use the standard wall layout, 6 actions (south, north, east, west,
/// pickup, dropoff), and deterministic moves. Rewards are the classic
/// -1 per step / +20 successful dropoff / -10 illegal pickup-or-dropoff
/// schedule mapped affinely into [0, 1]: 0.3 per legal step, 1.0 on a
/// successful dropoff, 0 on an illegal pickup or dropoff. The affine map
/// preserves the optimal policy and keeps rewards in [0, r_max].

namespace nspope {

namespace taxi_detail {

inline constexpr int kGrid = 5;
// landmarks: R, G, Y, B as (row, col)
inline constexpr std::array<std::pair<int, int>, 4> kLandmarks{
    {{0, 0}, {0, 4}, {4, 0}, {4, 3}}};

/// True when a wall blocks moving east from (row, col) to (row, col+1).
inline bool wall_east(int row, int col) {
    if ((row == 0 || row == 1) && col == 1) return true;
    if ((row == 3 || row == 4) && col == 0) return true;
    if ((row == 3 || row == 4) && col == 2) return true;
    return false;
}

/// Applies a move action (0=south,1=north,2=east,3=west); returns the new
/// position, unchanged when blocked by a wall or the grid edge.
inline std::pair<int, int> move(int row, int col, int action) {
    switch (action) {
        case 0: return {row + 1 < kGrid ? row + 1 : row, col};
        case 1: return {row > 0 ? row - 1 : row, col};
        case 2: return {row, (!wall_east(row, col) && col + 1 < kGrid) ? col + 1 : col};
        case 3: return {row, (col > 0 && !wall_east(row, col - 1)) ? col - 1 : col};
        default: return {row, col};
    }
}

inline int landmark_at(int row, int col) {
    for (int i = 0; i < 4; ++i)
        if (kLandmarks[i].first == row && kLandmarks[i].second == col) return i;
    return -1;
}

}  // namespace taxi_detail

/// The classic 500-state encoding. State index:
/// ((row*5 + col)*5 + pass)*4 + dest, pass in 0..4 (4 = in taxi),
/// dest in 0..3. The initial distribution is uniform over states with a
/// waiting passenger and pass != dest (300 states).
inline TabularDecisionProcess build_taxi_small(real_t gamma = 0.98) {
    using namespace taxi_detail;
    const int S = 500, A = 6;
    TabularDecisionProcess mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.flavor = Flavor::stationary_discounted;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    // classic rewards mapped into [0,1]: (-1, +20, -10) -> (0.3, 1.0, 0.0)
    const real_t kStep = 0.3, kSuccess = 1.0, kIllegal = 0.0;
    mdp.transition.assign(1, std::vector<real_t>(static_cast<std::size_t>(S) * A * S, 0.0));
    mdp.rewards.assign(1, std::vector<RewardDist>(static_cast<std::size_t>(S) * A,
                                                  RewardDist{{kStep, 1.0}}));
    auto index = [](int row, int col, int pass, int dest) {
        return ((row * kGrid + col) * 5 + pass) * 4 + dest;
    };
    auto& kernel = mdp.transition[0];
    auto put = [&](int s, int a, int sn, real_t p) {
        kernel[(static_cast<std::size_t>(s) * A + a) * S + sn] += p;
    };
    for (int row = 0; row < kGrid; ++row)
        for (int col = 0; col < kGrid; ++col)
            for (int pass = 0; pass < 5; ++pass)
                for (int dest = 0; dest < 4; ++dest) {
                    int s = index(row, col, pass, dest);
                    for (int a = 0; a < A; ++a) {
                        if (a < 4) {
                            auto [nr, nc] = move(row, col, a);
                            put(s, a, index(nr, nc, pass, dest), 1.0);
                            continue;
                        }
                        int lm = landmark_at(row, col);
                        if (a == 4) {  // pickup
                            if (lm >= 0 && pass == lm) {
                                put(s, a, index(row, col, 4, dest), 1.0);
                            } else {
                                put(s, a, s, 1.0);
                                mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kIllegal, 1.0}};
                            }
                        } else {  // dropoff
                            if (lm >= 0 && pass == 4 && dest == lm) {
                                // success: continue with a fresh task
                                for (int np = 0; np < 4; ++np)
                                    for (int nd = 0; nd < 4; ++nd) {
                                        if (np == nd) continue;
                                        put(s, a, index(row, col, np, nd), 1.0 / 12.0);
                                    }
                                mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kSuccess, 1.0}};
                            } else {
                                put(s, a, s, 1.0);
                                mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kIllegal, 1.0}};
                            }
                        }
                    }
                }
    mdp.initial_dist.assign(S, 0.0);
    for (int row = 0; row < kGrid; ++row)
        for (int col = 0; col < kGrid; ++col)
            for (int pass = 0; pass < 4; ++pass)
                for (int dest = 0; dest < 4; ++dest)
                    if (pass != dest) mdp.initial_dist[index(row, col, pass, dest)] = 1.0 / 300.0;
    mdp.validate();
    return mdp;
}

/// The 2000-state multi-passenger encoding. State index:
/// (pos*16 + waiting_bits)*5 + carry, carry in 0..4 (0 = empty,
/// 1+L = carrying a passenger bound for landmark L).
inline TabularDecisionProcess build_taxi_2000(real_t gamma = 0.98, real_t appear_prob = 0.25) {
    using namespace taxi_detail;
    const int S = 2000, A = 6;
    TabularDecisionProcess mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.flavor = Flavor::stationary_discounted;
    mdp.gamma = gamma;
    mdp.r_max = 1.0;
    const real_t kStep = 0.3, kSuccess = 1.0, kIllegal = 0.0;
    mdp.transition.assign(1, std::vector<real_t>(static_cast<std::size_t>(S) * A * S, 0.0));
    mdp.rewards.assign(1, std::vector<RewardDist>(static_cast<std::size_t>(S) * A,
                                                  RewardDist{{kStep, 1.0}}));
    auto index = [](int pos, int bits, int carry) { return (pos * 16 + bits) * 5 + carry; };
    auto& kernel = mdp.transition[0];
    auto put = [&](int s, int a, int sn, real_t p) {
        kernel[(static_cast<std::size_t>(s) * A + a) * S + sn] += p;
    };
    // spread mass over passenger appearances at empty landmarks
    auto scatter = [&](int s, int a, int pos, int bits, int carry, real_t p) {
        std::vector<int> empty;
        for (int l = 0; l < 4; ++l)
            if (!(bits & (1 << l))) empty.push_back(l);
        const int m = static_cast<int>(empty.size());
        for (int mask = 0; mask < (1 << m); ++mask) {
            real_t prob = p;
            int new_bits = bits;
            for (int i = 0; i < m; ++i) {
                if (mask & (1 << i)) {
                    prob *= appear_prob;
                    new_bits |= 1 << empty[i];
                } else {
                    prob *= 1.0 - appear_prob;
                }
            }
            put(s, a, index(pos, new_bits, carry), prob);
        }
    };
    for (int pos = 0; pos < 25; ++pos) {
        int row = pos / kGrid, col = pos % kGrid;
        int lm = landmark_at(row, col);
        for (int bits = 0; bits < 16; ++bits)
            for (int carry = 0; carry < 5; ++carry) {
                int s = index(pos, bits, carry);
                for (int a = 0; a < A; ++a) {
                    if (a < 4) {
                        auto [nr, nc] = move(row, col, a);
                        scatter(s, a, nr * kGrid + nc, bits, carry, 1.0);
                    } else if (a == 4) {  // pickup
                        if (lm >= 0 && carry == 0 && (bits & (1 << lm))) {
                            // destination uniform over the other landmarks
                            for (int d = 0; d < 4; ++d) {
                                if (d == lm) continue;
                                scatter(s, a, pos, bits & ~(1 << lm), 1 + d, 1.0 / 3.0);
                            }
                        } else {
                            scatter(s, a, pos, bits, carry, 1.0);
                            mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kIllegal, 1.0}};
                        }
                    } else {  // dropoff
                        if (lm >= 0 && carry == 1 + lm) {
                            scatter(s, a, pos, bits, 0, 1.0);
                            mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kSuccess, 1.0}};
                        } else {
                            scatter(s, a, pos, bits, carry, 1.0);
                            mdp.rewards[0][mdp.sa(s, a)] = RewardDist{{kIllegal, 1.0}};
                        }
                    }
                }
            }
    }
    mdp.initial_dist.assign(S, 0.0);
    for (int pos = 0; pos < 25; ++pos)
        for (int bits = 0; bits < 16; ++bits)
            mdp.initial_dist[index(pos, bits, 0)] = 1.0 / (25.0 * 16.0);
    mdp.validate();
    return mdp;
}

/// Builtin environments by name.
inline TabularDecisionProcess build_taxi(const std::string& option, real_t gamma = 0.98) {
    if (option == "taxi-small" || option == "small") return build_taxi_small(gamma);
    if (option == "taxi-2000" || option == "2000") return build_taxi_2000(gamma);
    throw validation_error("build_taxi: unknown option '" + option +
                           "' (expected taxi-small or taxi-2000)");
}

/// Model-based tabular q-learning: `iterations` synchronous sweeps of
/// q(s,a) <- (1-lr) q(s,a) + lr (rbar(s,a) + gamma E[max_a' q(s',a')]),
/// then the greedy policy (ties to the lowest action index) softened as
/// pi(a|s) = (1-eps) 1[a = argmax] + eps/|A|. The sweep updates are
/// deterministic, so the seed only tags the run.
inline StochasticPolicy q_learning(const TabularDecisionProcess& mdp, int iterations,
                                   real_t learning_rate, real_t epsilon_soften,
                                   std::uint64_t /*seed*/ = 0) {
    mdp.require_discounted("q_learning");
    if (epsilon_soften < 0.0 || epsilon_soften >= 1.0)
        throw validation_error("q_learning: epsilon_soften must lie in [0,1)");
    const int S = mdp.n_states, A = mdp.n_actions;
    std::vector<real_t> q(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<real_t> vmax(S, 0.0);
    for (int it = 0; it < iterations; ++it) {
        for (int s = 0; s < S; ++s) {
            real_t best = q[mdp.sa(s, 0)];
            for (int a = 1; a < A; ++a) best = std::max(best, q[mdp.sa(s, a)]);
            vmax[s] = best;
        }
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                real_t target = mdp.mean_reward(0, s, a);
                for (int sn = 0; sn < S; ++sn) {
                    real_t p = mdp.trans(0, s, a, sn);
                    if (p != 0.0) target += mdp.gamma * p * vmax[sn];
                }
                q[mdp.sa(s, a)] = (1.0 - learning_rate) * q[mdp.sa(s, a)] + learning_rate * target;
            }
    }
    std::vector<real_t> probs(static_cast<std::size_t>(S) * A, epsilon_soften / A);
    for (int s = 0; s < S; ++s) {
        int best = 0;
        for (int a = 1; a < A; ++a)
            if (q[mdp.sa(s, a)] > q[mdp.sa(s, best)]) best = a;
        probs[mdp.sa(s, best)] += 1.0 - epsilon_soften;
    }
    return StochasticPolicy(S, A, {std::move(probs)});
}

}  // namespace nspope

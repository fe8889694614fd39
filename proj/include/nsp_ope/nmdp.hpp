#pragma once

#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsp_ope/bounds.hpp"

/// \file nmdp.hpp
/// Non-Markov (history-dependent) analysis by embedding: an NMDP over a base
/// process is a TMDP whose state at time t is the state-action history
/// (s_1, a_1, ..., s_t). Under the embedding the marginal state ratio w_t
/// becomes the cumulative importance ratio lambda_{t-1}, so the NMDP
/// efficiency bounds and estimators are the TMDP ones on the embedded space.
/// History counts grow like S (A S)^{t-1}; the embedding is exposed for
/// short horizons only.

namespace nspope {

/// Restricts a process to an H-step finite-horizon view with a shared kernel.
/// Accepts a stationary-discounted process or a non-time-varying
/// finite-horizon one.
inline TabularDecisionProcess finite_view(const TabularDecisionProcess& mdp, int horizon) {
    if (mdp.is_finite() && mdp.time_varying) {
        if (mdp.horizon < horizon)
            throw validation_error("finite_view: requested horizon exceeds the process horizon");
        TabularDecisionProcess out = mdp;
        out.horizon = horizon;
        out.transition.resize(horizon);
        out.rewards.resize(horizon);
        return out;
    }
    TabularDecisionProcess out;
    out.n_states = mdp.n_states;
    out.n_actions = mdp.n_actions;
    out.flavor = Flavor::finite_horizon;
    out.horizon = horizon;
    out.time_varying = false;
    out.r_max = mdp.r_max;
    out.transition = {mdp.transition[0]};
    out.rewards = {mdp.rewards[0]};
    out.initial_dist = mdp.initial_dist;
    return out;
}

/// The history embedding of a base process: a time-varying finite-horizon
/// TMDP over history states, the lifted behavior policy and policy spec, and
/// the trajectory map. One absorbing terminal state stands in for all
/// length-(H+1) histories; nothing evaluates value functions there.
class NmdpEmbedding {
public:
    /// Builds the embedding for horizon H (taken from the base view).
    /// `max_states` caps the history count; exceeding it is an error since
    /// dense kernels over histories grow quadratically.
    NmdpEmbedding(const TabularDecisionProcess& base, const StochasticPolicy& pi_b,
                  const NaturalPolicySpec& spec, int max_states = 2048)
        : base_(base), spec_base_(spec) {
        base_.require_finite("NmdpEmbedding");
        base_.check_policy(pi_b, "NmdpEmbedding");
        const int S = base_.n_states, A = base_.n_actions, H = base_.horizon;
        // enumerate histories level by level; children keyed by (a, s')
        std::vector<int> frontier;
        for (int s = 0; s < S; ++s) {
            if (base_.initial_dist[s] == 0.0) continue;
            level_.push_back(0);
            base_state_.push_back(s);
            root_index_[s] = static_cast<int>(level_.size()) - 1;
            frontier.push_back(static_cast<int>(level_.size()) - 1);
        }
        children_.resize(level_.size());
        for (int t = 0; t + 1 < H; ++t) {
            std::vector<int> next;
            for (int h : frontier) {
                int s = base_state_[h];
                for (int a = 0; a < A; ++a)
                    for (int sn = 0; sn < S; ++sn) {
                        if (base_.trans(t, s, a, sn) == 0.0) continue;
                        int idx = static_cast<int>(level_.size());
                        if (idx >= max_states)
                            throw validation_error(
                                "NmdpEmbedding: history count exceeds max_states (" +
                                std::to_string(max_states) + "); reduce H or the instance size");
                        level_.push_back(t + 1);
                        base_state_.push_back(sn);
                        children_.emplace_back();
                        children_[h][key(a, sn)] = idx;
                        next.push_back(idx);
                    }
            }
            frontier = std::move(next);
        }
        terminal_ = static_cast<int>(level_.size());
        level_.push_back(H);
        base_state_.push_back(-1);
        children_.emplace_back();
        build_process(pi_b);
    }

    const TabularDecisionProcess& embedded() const { return embedded_; }
    const StochasticPolicy& behavior() const { return behavior_; }
    const NaturalPolicySpec& spec() const { return spec_; }
    int terminal_state() const { return terminal_; }

    /// Maps a base trajectory to its history-state trajectory.
    Trajectory embed(const Trajectory& traj) const {
        Trajectory out;
        out.actions = traj.actions;
        out.rewards = traj.rewards;
        const int H = traj.horizon();
        out.states.resize(H + 1);
        auto it = root_index_.find(traj.states[0]);
        if (it == root_index_.end())
            throw validation_error("NmdpEmbedding: trajectory starts outside the initial support");
        int node = it->second;
        for (int t = 0; t < H; ++t) {
            out.states[t] = node;
            if (t + 1 < H) {
                auto child = children_[node].find(key(traj.actions[t], traj.states[t + 1]));
                if (child == children_[node].end())
                    throw validation_error(
                        "NmdpEmbedding: trajectory takes a zero-probability transition");
                node = child->second;
            }
        }
        out.states[H] = terminal_;
        return out;
    }

    Dataset embed(const Dataset& data) const {
        data.require_kind(DatasetKind::trajectories, "NmdpEmbedding::embed");
        Dataset out;
        out.kind = DatasetKind::trajectories;
        out.n_states = embedded_.n_states;
        out.n_actions = embedded_.n_actions;
        out.horizon = data.horizon;
        out.seed = data.seed;
        out.trajectories.reserve(data.trajectories.size());
        for (const auto& traj : data.trajectories) out.trajectories.push_back(embed(traj));
        return out;
    }

private:
    static long key(int a, int sn) { return static_cast<long>(a) * 1000003L + sn; }

    void build_process(const StochasticPolicy& pi_b) {
        const int A = base_.n_actions, H = base_.horizon;
        const int N = static_cast<int>(level_.size());
        embedded_.n_states = N;
        embedded_.n_actions = A;
        embedded_.flavor = Flavor::finite_horizon;
        embedded_.horizon = H;
        embedded_.time_varying = true;
        embedded_.r_max = base_.r_max;
        embedded_.initial_dist.assign(N, 0.0);
        for (const auto& [s, idx] : root_index_) embedded_.initial_dist[idx] = base_.initial_dist[s];
        embedded_.transition.assign(H, std::vector<real_t>(
                                           static_cast<std::size_t>(N) * A * N, 0.0));
        embedded_.rewards.assign(H, std::vector<RewardDist>(static_cast<std::size_t>(N) * A,
                                                            RewardDist{{0.0, 1.0}}));
        std::vector<std::vector<real_t>> behavior(
            H, std::vector<real_t>(static_cast<std::size_t>(N) * A, 1.0 / A));
        std::vector<std::vector<int>> tau;
        const bool modified = spec_base_.kind == NaturalPolicySpec::Kind::modified_treatment;
        if (modified)
            tau.assign(H, std::vector<int>(static_cast<std::size_t>(N) * A, 0));
        for (int t = 0; t < H; ++t) {
            auto& kernel = embedded_.transition[t];
            for (int h = 0; h < N; ++h) {
                int s = base_state_[h];
                const bool active = (level_[h] == t) && (h != terminal_);
                for (int a = 0; a < A; ++a) {
                    std::size_t row = (static_cast<std::size_t>(h) * A + a) * N;
                    if (!active) {
                        kernel[row + h] = 1.0;  // off-level padding: self loop
                        if (modified) tau[t][static_cast<std::size_t>(h) * A + a] = a;
                        continue;
                    }
                    if (t + 1 < H) {
                        for (const auto& [k, child] : children_[h]) {
                            int sn = static_cast<int>(k % 1000003L);
                            int ka = static_cast<int>(k / 1000003L);
                            if (ka != a) continue;
                            kernel[row + child] = base_.trans(t, s, a, sn);
                        }
                        // transitions the base kernel forbids carry no mass;
                        // renormalization is unnecessary because rows already sum to 1
                    } else {
                        kernel[row + terminal_] = 1.0;
                    }
                    embedded_.rewards[t][static_cast<std::size_t>(h) * A + a] =
                        base_.reward_dist(t, s, a);
                    for (int b = 0; b < A; ++b)
                        behavior[t][static_cast<std::size_t>(h) * A + b] = pi_b.prob(t, s, b);
                    if (modified)
                        for (int b = 0; b < A; ++b)
                            tau[t][static_cast<std::size_t>(h) * A + b] =
                                spec_base_.tau_at(t, s, b, A);
                }
            }
        }
        embedded_.validate();
        behavior_ = StochasticPolicy(N, A, std::move(behavior));
        if (modified) {
            spec_.kind = NaturalPolicySpec::Kind::modified_treatment;
            spec_.tau = std::move(tau);
        } else {
            spec_.kind = NaturalPolicySpec::Kind::tilting;
            spec_.u = spec_base_.u;
        }
    }

    TabularDecisionProcess base_;
    NaturalPolicySpec spec_base_;
    TabularDecisionProcess embedded_;
    StochasticPolicy behavior_;
    NaturalPolicySpec spec_;
    std::vector<int> level_;
    std::vector<int> base_state_;
    std::vector<std::unordered_map<long, int>> children_;
    std::unordered_map<int, int> root_index_;
    int terminal_ = 0;
};

/// NMDP efficiency bound for horizon H computed on the history-embedded
/// TMDP; estimand TI1 selects the tilting form, MO1 the modified-treatment
/// form.
inline EfficiencyBounds bound_nmdp(const TabularDecisionProcess& mdp,
                                   const StochasticPolicy& pi_b, const NaturalPolicySpec& spec,
                                   int horizon, Estimand estimand, int max_states = 2048) {
    if (estimand != Estimand::TI1 && estimand != Estimand::MO1)
        throw validation_error("bound_nmdp: estimand must be TI1 or MO1");
    if (horizon > 4)
        throw validation_error("bound_nmdp: exposed for H <= 4 (history growth is exponential)");
    TabularDecisionProcess base = finite_view(mdp, horizon);
    NmdpEmbedding emb(base, pi_b, spec, max_states);
    return bound_finite(emb.embedded(), emb.behavior(), emb.spec(), estimand);
}

/// Finite-horizon estimator run on the history-embedded state space (the
/// NMDP form of TI1/MO1). Exposed for H <= 4.
inline EstimateReport estimate_nmdp(const TabularDecisionProcess& mdp,
                                    const StochasticPolicy& pi_b, const Dataset& data,
                                    const NaturalPolicySpec& spec, Estimand estimand, int k,
                                    std::uint64_t seed, EstimatorOptions opt = {},
                                    int max_states = 2048) {
    if (data.horizon > 4)
        throw validation_error("estimate_nmdp: exposed for H <= 4");
    TabularDecisionProcess base = finite_view(mdp, data.horizon);
    NmdpEmbedding emb(base, pi_b, spec, max_states);
    Dataset embedded = emb.embed(data);
    // oracle mode must point at the embedded process
    TrainerConfig trainer = opt.trainer;
    if (trainer.oracle()) {
        trainer.oracle_mdp = &emb.embedded();
        trainer.oracle_behavior = &emb.behavior();
        opt.trainer = trainer;
    }
    if (estimand == Estimand::TI1) return estimate_TI1(embedded, emb.spec(), k, seed, opt);
    if (estimand == Estimand::MO1) return estimate_MO1(embedded, emb.spec(), k, seed, opt);
    throw validation_error("estimate_nmdp: estimand must be TI1 or MO1");
}

/// Curse-of-horizon report: for each H, the NMDP bound, the TMDP bound, the
/// geometric lower bound C_min^{H-1} V_min^2 (tilting) or C_min^H V_min^2
/// (modified treatment), and the polynomial cap of the TMDP bound.
struct CurseRow {
    int horizon = 0;
    real_t nmdp_bound = 0.0;
    real_t tmdp_bound = 0.0;
    real_t lower_bound = 0.0;
    real_t c_min = 0.0;
    real_t v2_min = 0.0;
    real_t tmdp_cap = 0.0;
};

/// Computes C_min = min_t exp(E_{pi_e}[log eta_t]) and V_min^2 as the
/// smallest per-time geometric mean of the conditional-variance terms, then
/// checks the NMDP bound against the geometric lower bound for each H.
/// States with zero evaluation-policy probability carry no weight in the
/// geometric means; a zero variance term on the support makes the lower
/// bound vacuous (V_min = 0), which is reported, not an error.
inline std::vector<CurseRow> curse_check(const TabularDecisionProcess& mdp,
                                         const StochasticPolicy& pi_b,
                                         const NaturalPolicySpec& spec,
                                         const std::vector<int>& horizons, int max_states = 2048) {
    std::vector<CurseRow> rows;
    const bool modified = spec.kind == NaturalPolicySpec::Kind::modified_treatment;
    for (int H : horizons) {
        TabularDecisionProcess fv = finite_view(mdp, H);
        const int S = fv.n_states, A = fv.n_actions;
        StochasticPolicy pi_e = make_evaluation_policy(pi_b, spec);
        RatioSet ratios = compute_ratios(fv, pi_b, pi_e);
        FiniteQV qv = exact_q_v_finite(fv, pi_e);
        auto d_e = exact_marginals_finite(fv, pi_e);
        auto q_tau = [&](int t, int s, int a) {
            return qv.q[t][static_cast<std::size_t>(s) * A + spec.tau_at(t, s, a, A)];
        };

        real_t c_min = std::numeric_limits<real_t>::infinity();
        real_t v2_min = std::numeric_limits<real_t>::infinity();
        bool any_vacuous = false;
        for (int t = 0; t < H; ++t) {
            real_t log_eta = 0.0;
            for (int s = 0; s < S; ++s) {
                if (d_e[t][s] == 0.0) continue;
                for (int a = 0; a < A; ++a) {
                    real_t pe = pi_e.prob(t, s, a);
                    if (pe == 0.0) continue;
                    log_eta += d_e[t][s] * pe * std::log(ratios.eta[t][fv.sa(s, a)]);
                }
            }
            c_min = std::min(c_min, std::exp(log_eta));

            bool vacuous = false;
            real_t log_var = 0.0;
            if (!modified) {
                const std::vector<real_t>* v_next = (t + 1 < H) ? &qv.v[t + 1] : nullptr;
                for (int s = 0; s < S && !vacuous; ++s) {
                    if (d_e[t][s] == 0.0) continue;
                    real_t g = detail::centered_state_term(fv, pi_b, t, s, ratios.eta[t], v_next,
                                                           qv.v[t][s]);
                    if (g <= 0.0)
                        vacuous = true;
                    else
                        log_var += d_e[t][s] * std::log(g);
                }
            } else {
                for (int s = 0; s < S && !vacuous; ++s) {
                    if (d_e[t][s] == 0.0) continue;
                    for (int a = 0; a < A && !vacuous; ++a) {
                        real_t pe = pi_e.prob(t, s, a);
                        if (pe == 0.0) continue;
                        real_t g = fv.reward_variance(t, s, a);
                        if (t + 1 < H)
                            g += detail::next_state_action_variance(
                                fv, pi_b, t, s, a,
                                [&](int sn, int an) { return q_tau(t + 1, sn, an); });
                        if (g <= 0.0)
                            vacuous = true;
                        else
                            log_var += d_e[t][s] * pe * std::log(g);
                    }
                }
            }
            if (vacuous)
                any_vacuous = true;
            else
                v2_min = std::min(v2_min, std::exp(log_var));
        }
        if (any_vacuous) v2_min = 0.0;

        CurseRow row;
        row.horizon = H;
        row.c_min = c_min;
        row.v2_min = v2_min;
        row.lower_bound = v2_min * std::pow(c_min, modified ? H : H - 1);
        Estimand est = modified ? Estimand::MO1 : Estimand::TI1;
        row.nmdp_bound = bound_nmdp(fv, pi_b, spec, H, est, max_states).value;
        EfficiencyBounds tmdp = bound_finite(fv, pi_b, spec, est);
        row.tmdp_bound = tmdp.value;
        row.tmdp_cap = tmdp.upper_bound_cap.value_or(0.0);
        if (row.nmdp_bound < row.lower_bound - 1e-9)
            throw computation_error("curse_check: NMDP bound " + std::to_string(row.nmdp_bound) +
                                    " fell below the geometric lower bound " +
                                    std::to_string(row.lower_bound) + " at H=" + std::to_string(H));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace nspope

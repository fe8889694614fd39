#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsp_ope/linear_solve.hpp"
#include "nsp_ope/policies.hpp"
#include "nsp_ope/simulate.hpp"

/// \file nuisance.hpp
/// Nuisance estimation: behavior-policy fits, fitted-q iteration, marginal
/// density-ratio estimators, stationary moment-system solvers, controlled
/// corruption for robustness experiments, and exact oracle nuisances.

namespace nspope {

/// A compatible set of nuisance estimates.
///
/// The evaluation policy, instantaneous ratios, and v-functions are always
/// re-derived from (pi_b_hat, q_hat, spec) at construction; it is not
/// possible to hold a set where v_hat disagrees with sum_a q_hat * pi_e_hat.
/// That compatibility is what gives the estimators their second-order bias
/// structure, so it is enforced by the type rather than by convention.
class NuisanceSet {
public:
    /// Finite-horizon set: q_hat and w_hat have one slice per decision time.
    NuisanceSet(NaturalPolicySpec spec, StochasticPolicy pi_b_hat,
                std::vector<std::vector<real_t>> q_hat, std::vector<std::vector<real_t>> w_hat,
                Diagnostics diag = {})
        : spec_(std::move(spec)),
          pi_b_hat_(std::move(pi_b_hat)),
          q_hat_(std::move(q_hat)),
          w_hat_(std::move(w_hat)),
          finite_(true),
          diag_(std::move(diag)) {
        derive();
    }

    /// Stationary set: single q slice plus the visitation ratio w*.
    NuisanceSet(NaturalPolicySpec spec, StochasticPolicy pi_b_hat,
                std::vector<real_t> q_hat_single, std::vector<real_t> w_star_hat,
                Diagnostics diag = {})
        : spec_(std::move(spec)),
          pi_b_hat_(std::move(pi_b_hat)),
          q_hat_({std::move(q_hat_single)}),
          w_star_hat_(std::move(w_star_hat)),
          finite_(false),
          diag_(std::move(diag)) {
        derive();
    }

    bool finite_horizon() const { return finite_; }
    int n_states() const { return pi_b_hat_.n_states(); }
    int n_actions() const { return pi_b_hat_.n_actions(); }
    int horizon() const { return static_cast<int>(q_hat_.size()); }

    const NaturalPolicySpec& spec() const { return spec_; }
    const StochasticPolicy& pi_b_hat() const { return pi_b_hat_; }
    const StochasticPolicy& pi_e_hat() const { return pi_e_hat_; }
    const Diagnostics& diagnostics() const { return diag_; }
    Diagnostics& diagnostics() { return diag_; }

    real_t q(int t, int s, int a) const {
        return q_hat_[std::min<std::size_t>(t, q_hat_.size() - 1)]
                     [static_cast<std::size_t>(s) * n_actions() + a];
    }
    /// q^tau(s,a) = q(s, tau(s,a)); modified-treatment specs only.
    real_t q_tau(int t, int s, int a) const {
        return q(t, s, spec_.tau_at(t, s, a, n_actions()));
    }
    real_t v(int t, int s) const {
        return v_hat_[std::min<std::size_t>(t, v_hat_.size() - 1)][s];
    }
    real_t eta(int t, int s, int a) const {
        return eta_hat_[std::min<std::size_t>(t, eta_hat_.size() - 1)]
                       [static_cast<std::size_t>(s) * n_actions() + a];
    }
    real_t w(int t, int s) const { return w_hat_[t][s]; }
    real_t w_star(int s) const { return w_star_hat_[s]; }

    const std::vector<std::vector<real_t>>& q_table() const { return q_hat_; }
    const std::vector<std::vector<real_t>>& v_table() const { return v_hat_; }
    const std::vector<std::vector<real_t>>& w_table() const { return w_hat_; }
    const std::vector<real_t>& w_star_table() const { return w_star_hat_; }
    const std::vector<std::vector<real_t>>& eta_table() const { return eta_hat_; }

    /// Raw copies used by corrupt() to rebuild a modified set.
    std::vector<std::vector<real_t>> q_raw() const { return q_hat_; }
    std::vector<std::vector<real_t>> w_raw() const { return w_hat_; }
    std::vector<real_t> w_star_raw() const { return w_star_hat_; }

private:
    void derive() {
        spec_.validate(n_states(), n_actions());
        pi_e_hat_ = make_evaluation_policy(pi_b_hat_, spec_);
        const int slices = finite_ ? static_cast<int>(q_hat_.size()) : 1;
        eta_hat_ = compute_eta_tables(pi_b_hat_, pi_e_hat_, slices, &diag_);
        v_hat_.assign(q_hat_.size(), std::vector<real_t>(n_states(), 0.0));
        for (std::size_t t = 0; t < q_hat_.size(); ++t)
            for (int s = 0; s < n_states(); ++s) {
                real_t v = 0.0;
                for (int a = 0; a < n_actions(); ++a)
                    v += q_hat_[t][static_cast<std::size_t>(s) * n_actions() + a] *
                         pi_e_hat_.prob(static_cast<int>(t), s, a);
                v_hat_[t][s] = v;
            }
        if (finite_ && w_hat_.size() != q_hat_.size())
            throw validation_error("nuisance set: w and q slice counts disagree");
        if (!finite_ && w_star_hat_.size() != static_cast<std::size_t>(n_states()))
            throw validation_error("nuisance set: w* has wrong length");
    }

    NaturalPolicySpec spec_;
    StochasticPolicy pi_b_hat_;
    std::vector<std::vector<real_t>> q_hat_;
    std::vector<std::vector<real_t>> w_hat_;
    std::vector<real_t> w_star_hat_;
    bool finite_ = true;
    StochasticPolicy pi_e_hat_;
    std::vector<std::vector<real_t>> eta_hat_;
    std::vector<std::vector<real_t>> v_hat_;
    Diagnostics diag_;
};

/// Controlled misspecification: additive Gaussian noise on one nuisance.
struct CorruptionSpec {
    enum class Target { q, w, w_star, pi_b };
    Target target = Target::q;
    real_t noise_mean = 0.0;
    real_t noise_sd = 0.0;
    std::uint64_t seed = 0;
};

inline CorruptionSpec::Target corruption_target_from_string(const std::string& name) {
    if (name == "q") return CorruptionSpec::Target::q;
    if (name == "w") return CorruptionSpec::Target::w;
    if (name == "w_star") return CorruptionSpec::Target::w_star;
    if (name == "pi_b") return CorruptionSpec::Target::pi_b;
    throw validation_error("unknown corruption target '" + name + "'");
}

/// Returns a new nuisance set with seeded i.i.d. noise added to the target
/// table. pi_b noise is applied in logit space on the support (zero entries
/// stay zero) and renormalized, so the corrupted policy is still a policy.
/// All derived quantities are rebuilt, so v_hat always matches the corrupted
/// tables.
inline NuisanceSet corrupt(const NuisanceSet& nuis, const CorruptionSpec& cspec) {
    std::mt19937_64 rng(cspec.seed);
    auto noise = [&]() { return cspec.noise_mean + cspec.noise_sd * normal01(rng); };
    auto q = nuis.q_raw();
    auto w = nuis.w_raw();
    auto w_star = nuis.w_star_raw();
    StochasticPolicy pi_b = nuis.pi_b_hat();
    switch (cspec.target) {
        case CorruptionSpec::Target::q:
            for (auto& slice : q)
                for (auto& x : slice) x += noise();
            break;
        case CorruptionSpec::Target::w:
            if (!nuis.finite_horizon())
                throw validation_error("corrupt: target w applies to finite-horizon sets");
            for (auto& slice : w)
                for (auto& x : slice) x += noise();
            break;
        case CorruptionSpec::Target::w_star:
            if (nuis.finite_horizon())
                throw validation_error("corrupt: target w_star applies to stationary sets");
            for (auto& x : w_star) x += noise();
            break;
        case CorruptionSpec::Target::pi_b: {
            const int A = pi_b.n_actions();
            for (auto& slice : pi_b.raw())
                for (std::size_t s = 0; s * A < slice.size(); ++s) {
                    real_t denom = 0.0;
                    std::vector<real_t> row(A, 0.0);
                    for (int a = 0; a < A; ++a) {
                        real_t p = slice[s * A + a];
                        if (p > 0.0) {
                            real_t logit = std::log(p) + noise();
                            row[a] = std::exp(std::clamp<real_t>(logit, -40.0, 40.0));
                            denom += row[a];
                        }
                    }
                    for (int a = 0; a < A; ++a) slice[s * A + a] = row[a] / denom;
                }
            break;
        }
    }
    Diagnostics diag = nuis.diagnostics();
    diag.add("corruptions_applied");
    if (nuis.finite_horizon())
        return NuisanceSet(nuis.spec(), std::move(pi_b), std::move(q), std::move(w), std::move(diag));
    return NuisanceSet(nuis.spec(), std::move(pi_b), std::move(q[0]), std::move(w_star),
                       std::move(diag));
}

// ---------------------------------------------------------------------------
// Behavior-policy estimation
// ---------------------------------------------------------------------------

/// Empirical-frequency fit pi_b_hat(a|s) = count(s,a)/count(s). Trajectory
/// datasets produce one slice per decision time; transition datasets a single
/// slice. States never visited fall back to a uniform row (counted in diag).
inline StochasticPolicy estimate_pi_b(const Dataset& data, Diagnostics* diag = nullptr) {
    const int S = data.n_states, A = data.n_actions;
    auto fit_slice = [&](const std::vector<real_t>& counts) {
        std::vector<real_t> slice(static_cast<std::size_t>(S) * A, 0.0);
        for (int s = 0; s < S; ++s) {
            real_t total = 0.0;
            for (int a = 0; a < A; ++a) total += counts[static_cast<std::size_t>(s) * A + a];
            if (total > 0.0) {
                for (int a = 0; a < A; ++a)
                    slice[static_cast<std::size_t>(s) * A + a] =
                        counts[static_cast<std::size_t>(s) * A + a] / total;
            } else {
                for (int a = 0; a < A; ++a) slice[static_cast<std::size_t>(s) * A + a] = 1.0 / A;
                if (diag) diag->add("pi_b_unseen_states");
            }
        }
        return slice;
    };
    if (data.kind == DatasetKind::trajectories) {
        data.require_kind(DatasetKind::trajectories, "estimate_pi_b");
        std::vector<std::vector<real_t>> probs;
        for (int t = 0; t < data.horizon; ++t) {
            std::vector<real_t> counts(static_cast<std::size_t>(S) * A, 0.0);
            for (const auto& traj : data.trajectories)
                counts[static_cast<std::size_t>(traj.states[t]) * A + traj.actions[t]] += 1.0;
            probs.push_back(fit_slice(counts));
        }
        return StochasticPolicy(S, A, std::move(probs));
    }
    data.require_kind(DatasetKind::transitions, "estimate_pi_b");
    std::vector<real_t> counts(static_cast<std::size_t>(S) * A, 0.0);
    for (const auto& tup : data.transitions)
        counts[static_cast<std::size_t>(tup.s) * A + tup.a] += 1.0;
    return StochasticPolicy(S, A, {fit_slice(counts)});
}

// ---------------------------------------------------------------------------
// Finite-horizon nuisances
// ---------------------------------------------------------------------------

/// Fitted-q iteration with q_{H+1} == 0: regress r_t + q_{t+1}(s_{t+1},
/// pi_e_hat) on (s_t, a_t) backward in time. In the tabular case the
/// regression is the per-(s,a) sample mean; unvisited cells are 0.
inline std::vector<std::vector<real_t>> fitted_q_iteration(const Dataset& data,
                                                           const StochasticPolicy& pi_e_hat,
                                                           Diagnostics* diag = nullptr) {
    data.require_kind(DatasetKind::trajectories, "fitted_q_iteration");
    const int S = data.n_states, A = data.n_actions, H = data.horizon;
    std::vector<std::vector<real_t>> q(H, std::vector<real_t>(static_cast<std::size_t>(S) * A, 0.0));
    std::vector<real_t> v_next(S, 0.0);
    for (int t = H - 1; t >= 0; --t) {
        std::vector<real_t> sums(static_cast<std::size_t>(S) * A, 0.0);
        std::vector<real_t> counts(static_cast<std::size_t>(S) * A, 0.0);
        for (const auto& traj : data.trajectories) {
            std::size_t cell = static_cast<std::size_t>(traj.states[t]) * A + traj.actions[t];
            sums[cell] += traj.rewards[t] + v_next[traj.states[t + 1]];
            counts[cell] += 1.0;
        }
        for (std::size_t cell = 0; cell < sums.size(); ++cell) {
            if (counts[cell] > 0.0) {
                q[t][cell] = sums[cell] / counts[cell];
            } else if (diag) {
                diag->add("q_unvisited_cells");
            }
        }
        for (int s = 0; s < S; ++s) {
            real_t v = 0.0;
            for (int a = 0; a < A; ++a)
                v += pi_e_hat.prob(t, s, a) * q[t][static_cast<std::size_t>(s) * A + a];
            v_next[s] = v;
        }
    }
    return q;
}

/// Model-based marginal-ratio estimate: empirical histograms for the
/// per-time transition kernels and behavior marginals, evaluation marginals
/// by forward propagation of pi_e_hat, then the ratio. w_1 == 1 identically;
/// ratios at empty histogram cells are 0.
inline std::vector<std::vector<real_t>> estimate_w_model_based(const Dataset& data,
                                                               const StochasticPolicy& pi_e_hat,
                                                               Diagnostics* diag = nullptr) {
    data.require_kind(DatasetKind::trajectories, "estimate_w_model_based");
    const int S = data.n_states, A = data.n_actions, H = data.horizon;
    const real_t n = static_cast<real_t>(data.trajectories.size());
    std::vector<std::vector<real_t>> w(H, std::vector<real_t>(S, 0.0));
    std::vector<real_t> p_e(S, 0.0);
    for (const auto& traj : data.trajectories) p_e[traj.states[0]] += 1.0 / n;
    for (int t = 0; t < H; ++t) {
        std::vector<real_t> p_b_t(S, 0.0);
        for (const auto& traj : data.trajectories) p_b_t[traj.states[t]] += 1.0 / n;
        for (int s = 0; s < S; ++s) {
            if (t == 0)
                w[t][s] = 1.0;
            else if (p_b_t[s] > 0.0)
                w[t][s] = p_e[s] / p_b_t[s];
            else if (diag)
                diag->add("w_unvisited_states");
        }
        if (t + 1 == H) break;
        // histogram kernel at time t, then propagate under pi_e_hat
        std::vector<real_t> trans_counts(static_cast<std::size_t>(S) * A * S, 0.0);
        std::vector<real_t> sa_counts(static_cast<std::size_t>(S) * A, 0.0);
        for (const auto& traj : data.trajectories) {
            std::size_t cell = static_cast<std::size_t>(traj.states[t]) * A + traj.actions[t];
            trans_counts[cell * S + traj.states[t + 1]] += 1.0;
            sa_counts[cell] += 1.0;
        }
        std::vector<real_t> p_next(S, 0.0);
        for (int s = 0; s < S; ++s) {
            if (p_e[s] == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                std::size_t cell = static_cast<std::size_t>(s) * A + a;
                real_t weight = p_e[s] * pi_e_hat.prob(t, s, a);
                if (weight == 0.0) continue;
                if (sa_counts[cell] == 0.0) {
                    if (diag) diag->add("w_model_unvisited_sa");
                    continue;  // histogram has no row here; mass is dropped
                }
                for (int sn = 0; sn < S; ++sn)
                    p_next[sn] += weight * trans_counts[cell * S + sn] / sa_counts[cell];
            }
        }
        p_e = std::move(p_next);
    }
    return w;
}

enum class WRegressionVariant {
    recursive,  ///< w_t = E[eta_{t-1} w_{t-1} | s_t], fitted forward in time
    direct,     ///< w_t = E[lambda_{t-1} | s_t]
};

/// Forward recursive (or direct cumulative-ratio) regression estimate of the
/// marginal ratios; tabular regression is the per-state sample mean.
inline std::vector<std::vector<real_t>> estimate_w_regression(
    const Dataset& data, const std::vector<std::vector<real_t>>& eta_hat,
    WRegressionVariant variant = WRegressionVariant::recursive, Diagnostics* diag = nullptr) {
    data.require_kind(DatasetKind::trajectories, "estimate_w_regression");
    const int S = data.n_states, A = data.n_actions, H = data.horizon;
    const std::size_t n = data.trajectories.size();
    std::vector<std::vector<real_t>> w(H, std::vector<real_t>(S, 0.0));
    for (int s = 0; s < S; ++s) w[0][s] = 1.0;
    auto eta_at = [&](int t, int s, int a) {
        return eta_hat[std::min<std::size_t>(t, eta_hat.size() - 1)]
                      [static_cast<std::size_t>(s) * A + a];
    };
    // carry[i]: the regression target for trajectory i entering time t
    std::vector<real_t> carry(n, 1.0);
    for (int t = 1; t < H; ++t) {
        std::vector<real_t> sums(S, 0.0), counts(S, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& traj = data.trajectories[i];
            int s_prev = traj.states[t - 1], a_prev = traj.actions[t - 1];
            real_t base = variant == WRegressionVariant::recursive ? w[t - 1][s_prev] : carry[i];
            real_t z = eta_at(t - 1, s_prev, a_prev) * base;
            carry[i] = z;
            sums[traj.states[t]] += z;
            counts[traj.states[t]] += 1.0;
        }
        for (int s = 0; s < S; ++s) {
            if (counts[s] > 0.0)
                w[t][s] = sums[s] / counts[s];
            else if (diag)
                diag->add("w_unvisited_states");
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Stationary nuisances (moment systems with indicator test functions)
// ---------------------------------------------------------------------------

/// A transition sample with an attached weight. Data-driven fits use weight 1
/// per observation; the population ("infinite data") mode used in tests feeds
/// the exact transition law as weights through the same assembly.
struct WeightedTransitions {
    std::span<const TransitionTuple> tuples;
    std::span<const real_t> weights;  ///< empty means all ones

    real_t weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

/// Solves the empirical moment system for the discounted visitation ratio w*
/// with indicator test functions f = 1[s=i], restricted to states observed as
/// a source; unobserved states get w* = 0.
///
/// The population identity is
///   0 = (1-gamma) E_{p_e1}[f(s1)] + E_pb[w*(s)(gamma eta(s,a) f(s') - f(s))].
inline std::vector<real_t> estimate_w_star(const WeightedTransitions& data,
                                           const std::vector<real_t>& eta_hat, real_t gamma,
                                           const std::vector<real_t>& p_e1, int n_states,
                                           int n_actions, Diagnostics* diag = nullptr) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw validation_error("estimate_w_star: gamma must lie in (0,1)");
    if (data.tuples.empty()) throw validation_error("estimate_w_star: no transitions");
    std::vector<int> index(n_states, -1);
    std::vector<int> states;
    real_t total_weight = 0.0;
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        total_weight += data.weight(i);
        int s = data.tuples[i].s;
        if (index[s] < 0) {
            index[s] = static_cast<int>(states.size());
            states.push_back(s);
        }
    }
    const int m = static_cast<int>(states.size());
    SparseSystem sys(m);
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        const auto& tup = data.tuples[i];
        real_t wgt = data.weight(i) / total_weight;
        sys.add(index[tup.s], index[tup.s], -wgt);
        if (index[tup.s_next] >= 0)
            sys.add(index[tup.s_next], index[tup.s],
                    wgt * gamma * eta_hat[static_cast<std::size_t>(tup.s) * n_actions + tup.a]);
    }
    real_t dropped_mass = 0.0;
    for (int s = 0; s < n_states; ++s) {
        if (index[s] >= 0)
            sys.rhs[index[s]] = -(1.0 - gamma) * p_e1[s];
        else
            dropped_mass += p_e1[s];
    }
    if (diag) {
        if (dropped_mass > 0.0) diag->add("w_star_dropped_initial_mass", dropped_mass);
        if (m < n_states) diag->add("w_star_unvisited_states", n_states - m);
    }
    std::vector<real_t> solution = solve_moment_system(sys, "w_star", diag);
    std::vector<real_t> w_star(n_states, 0.0);
    for (int j = 0; j < m; ++j) w_star[states[j]] = solution[j];
    return w_star;
}

/// Solves the empirical Bellman moment system for the stationary q-function
/// with indicator test functions g = 1[s=i, a=j], restricted to observed
/// pairs; unobserved cells get q = 0.
///
/// For tilting specs (and, by default, modified-treatment specs with the
/// next action integrated out under pi_b_hat) the future term is
/// gamma * sum_a' pi_e_hat(a'|s') q(s',a'). With use_observed_next_action the
/// modified-treatment system instead uses the sampled a' through the
/// permuted entry q(s', tau(s',a')). Both are linear in q.
///
/// Evaluation-policy weight on unobserved next cells is renormalized onto
/// the observed support of the next state (the Bellman operator of the
/// empirical sub-process). Without renormalization that weight would act as
/// a per-step absorbing leak, and at discount factors near one even a few
/// percent of leaked mass collapses the fitted values toward zero.
///
/// Cells never observed are imputed with the support-averaged value of their
/// state (zero when the state itself was never a source), so score terms
/// that index single cells degrade to state-level estimates rather than to
/// zero; the imputation count is reported in the diagnostics.
inline std::vector<real_t> estimate_q_stationary(const WeightedTransitions& data,
                                                 const StochasticPolicy& pi_e_hat, real_t gamma,
                                                 const NaturalPolicySpec& spec,
                                                 bool use_observed_next_action = false,
                                                 Diagnostics* diag = nullptr) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw validation_error("estimate_q_stationary: gamma must lie in (0,1)");
    if (data.tuples.empty()) throw validation_error("estimate_q_stationary: no transitions");
    const int S = pi_e_hat.n_states(), A = pi_e_hat.n_actions();
    std::vector<int> index(static_cast<std::size_t>(S) * A, -1);
    std::vector<int> cells;
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        std::size_t cell = static_cast<std::size_t>(data.tuples[i].s) * A + data.tuples[i].a;
        if (index[cell] < 0) {
            index[cell] = static_cast<int>(cells.size());
            cells.push_back(static_cast<int>(cell));
        }
    }
    const int m = static_cast<int>(cells.size());
    // per-state pi_e_hat mass on the observed support, for renormalization
    std::vector<real_t> support_mass(S, 0.0);
    for (int cell : cells)
        support_mass[cell / A] += pi_e_hat.prob(0, cell / A, cell % A);
    SparseSystem sys(m);
    real_t renormalized = 0.0, dropped = 0.0;
    const bool observed_next =
        use_observed_next_action && spec.kind == NaturalPolicySpec::Kind::modified_treatment;
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        const auto& tup = data.tuples[i];
        real_t wgt = data.weight(i);
        int row = index[static_cast<std::size_t>(tup.s) * A + tup.a];
        sys.add(row, row, wgt);
        sys.rhs[row] += wgt * tup.r;
        if (observed_next) {
            int an = spec.tau_at(0, tup.s_next, tup.a_next, A);
            int col = index[static_cast<std::size_t>(tup.s_next) * A + an];
            if (col >= 0)
                sys.add(row, col, -wgt * gamma);
            else
                dropped += wgt;
        } else {
            real_t mass = support_mass[tup.s_next];
            if (mass <= 0.0) {
                dropped += wgt;  // next state never observed as a source
                continue;
            }
            if (mass < 1.0) renormalized += wgt * (1.0 - mass);
            for (int an = 0; an < A; ++an) {
                real_t pe = pi_e_hat.prob(0, tup.s_next, an);
                if (pe == 0.0) continue;
                int col = index[static_cast<std::size_t>(tup.s_next) * A + an];
                if (col >= 0) sys.add(row, col, -wgt * gamma * pe / mass);
            }
        }
    }
    if (diag) {
        if (dropped > 0.0) diag->add("q_dropped_future_weight", dropped);
        if (renormalized > 0.0) diag->add("q_renormalized_future_weight", renormalized);
        if (m < S * A) diag->add("q_unvisited_cells", S * A - m);
    }
    std::vector<real_t> solution = solve_moment_system(sys, "q_moment", diag);
    std::vector<real_t> q(static_cast<std::size_t>(S) * A, 0.0);
    for (int j = 0; j < m; ++j) q[cells[j]] = solution[j];
    // impute unobserved cells with the support-averaged state value
    std::vector<real_t> v_sub(S, 0.0);
    for (int j = 0; j < m; ++j) {
        int s = cells[j] / A, a = cells[j] % A;
        if (support_mass[s] > 0.0)
            v_sub[s] += pi_e_hat.prob(0, s, a) / support_mass[s] * solution[j];
    }
    for (int s = 0; s < S; ++s) {
        if (support_mass[s] <= 0.0) continue;
        for (int a = 0; a < A; ++a) {
            std::size_t cell = static_cast<std::size_t>(s) * A + a;
            if (index[cell] < 0) q[cell] = v_sub[s];
        }
    }
    return q;
}

/// Direct tabular fit of the stationary v-function from known ratios eta,
/// via the per-state moment v(s) = E[eta(s,a)(r + gamma v(s'))|s] with
/// indicator test functions. This is the nuisance the value-direct estimator
/// consumes; it bypasses the q/pi_e construction entirely.
inline std::vector<real_t> estimate_v_direct(const WeightedTransitions& data,
                                             const std::vector<real_t>& eta_known, real_t gamma,
                                             int n_states, int n_actions,
                                             Diagnostics* diag = nullptr) {
    if (data.tuples.empty()) throw validation_error("estimate_v_direct: no transitions");
    std::vector<int> index(n_states, -1);
    std::vector<int> states;
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        int s = data.tuples[i].s;
        if (index[s] < 0) {
            index[s] = static_cast<int>(states.size());
            states.push_back(s);
        }
    }
    const int m = static_cast<int>(states.size());
    SparseSystem sys(m);
    real_t dropped = 0.0;
    for (std::size_t i = 0; i < data.tuples.size(); ++i) {
        const auto& tup = data.tuples[i];
        real_t wgt = data.weight(i);
        real_t eta = eta_known[static_cast<std::size_t>(tup.s) * n_actions + tup.a];
        int row = index[tup.s];
        sys.add(row, row, wgt);
        sys.rhs[row] += wgt * eta * tup.r;
        int col = index[tup.s_next];
        if (col >= 0)
            sys.add(row, col, -wgt * gamma * eta);
        else
            dropped += wgt;
    }
    if (diag && dropped > 0.0) diag->add("v_direct_dropped_future_weight", dropped);
    if (diag && m < n_states) diag->add("v_direct_unvisited_states", n_states - m);
    std::vector<real_t> solution = solve_moment_system(sys, "v_direct", diag);
    std::vector<real_t> v(n_states, 0.0);
    for (int j = 0; j < m; ++j) v[states[j]] = solution[j];
    return v;
}

// ---------------------------------------------------------------------------
// Oracle nuisances
// ---------------------------------------------------------------------------

/// Exact nuisances from the model: the true behavior policy, the exact
/// q-function of the evaluation policy, and the exact marginal (or
/// visitation) ratios. The derived pi_e, eta, and v then equal their
/// population counterparts.
inline NuisanceSet oracle_nuisances(const TabularDecisionProcess& mdp,
                                    const StochasticPolicy& pi_b,
                                    const NaturalPolicySpec& spec) {
    StochasticPolicy pi_e = make_evaluation_policy(pi_b, spec);
    RatioSet ratios = compute_ratios(mdp, pi_b, pi_e);
    if (mdp.is_finite()) {
        FiniteQV qv = exact_q_v_finite(mdp, pi_e);
        return NuisanceSet(spec, pi_b, std::move(qv.q), std::move(ratios.w));
    }
    StationaryQV qv = exact_q_v_discounted(mdp, pi_e);
    return NuisanceSet(spec, pi_b, std::move(qv.q), std::move(ratios.w_star));
}

}  // namespace nspope

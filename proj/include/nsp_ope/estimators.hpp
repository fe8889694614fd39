#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsp_ope/crossfit.hpp"
#include "nsp_ope/nuisance.hpp"

/// \file estimators.hpp
/// Value estimators for natural stochastic policies: the cross-fitted
/// efficient estimators (TI1, MO1 for finite horizon; TI2, MO2 for the
/// stationary-discounted case), the marginalized-IS and direct-method
/// baselines, the naive plug-in that reuses the pre-specified-policy form,
/// and the value-direct estimator V2. Exact-expectation evaluators for every
/// phi are included; they power the bias and robustness checks.

namespace nspope {

enum class Estimand { TI1, MO1, NAIVE, PR, TI2, MO2, MIS, DM, V2 };

inline std::string estimand_name(Estimand e) {
    switch (e) {
        case Estimand::TI1: return "TI1";
        case Estimand::MO1: return "MO1";
        case Estimand::NAIVE: return "NAIVE";
        case Estimand::PR: return "PR";
        case Estimand::TI2: return "TI2";
        case Estimand::MO2: return "MO2";
        case Estimand::MIS: return "MIS";
        case Estimand::DM: return "DM";
        case Estimand::V2: return "V2";
    }
    return "?";
}

inline Estimand estimand_from_string(const std::string& name) {
    for (Estimand e : {Estimand::TI1, Estimand::MO1, Estimand::NAIVE, Estimand::PR, Estimand::TI2,
                       Estimand::MO2, Estimand::MIS, Estimand::DM, Estimand::V2})
        if (estimand_name(e) == name) return e;
    throw validation_error("unknown estimator '" + name + "'");
}

enum class WFitMethod { model_based, regression, regression_direct };

/// How per-fold nuisances are produced. With `oracle_mdp`/`oracle_behavior`
/// set, data fitting is skipped and exact nuisances are used (the
/// oracle-nuisance mode every efficiency check runs in). An optional
/// corruption is applied after fitting.
struct TrainerConfig {
    WFitMethod w_method = WFitMethod::model_based;
    bool use_observed_next_action = false;
    std::optional<CorruptionSpec> corruption;
    const TabularDecisionProcess* oracle_mdp = nullptr;
    const StochasticPolicy* oracle_behavior = nullptr;

    bool oracle() const { return oracle_mdp != nullptr; }
};

struct EstimatorOptions {
    FoldScheme fold_scheme = FoldScheme::random;
    TrainerConfig trainer;
    /// Known action distribution for the MO2 initial-state-action term
    /// (s,a) ~ p_e1 x pi. The term mirrors auxiliary draws from the behavior
    /// process itself, so it is not corrupted with pi_b_hat; when null, the
    /// fold's fitted pi_b_hat is used instead.
    const StochasticPolicy* aug_behavior = nullptr;
};

// ---------------------------------------------------------------------------
// Per-sample phi terms
// ---------------------------------------------------------------------------

/// Eq.-4-style score of one trajectory, with w_0 eta_0 := 1. `inner` selects
/// the centered term: v_hat (TI1), q_hat (MO1/naive), and `augment` the
/// carried term: v_hat (TI1/naive), q_tau (MO1).
inline real_t phi_trajectory(const Trajectory& traj, const NuisanceSet& nuis, Estimand kind) {
    real_t phi = 0.0;
    real_t rho_prev = 1.0;
    for (int t = 0; t < traj.horizon(); ++t) {
        const int s = traj.states[t], a = traj.actions[t];
        const real_t rho = nuis.w(t, s) * nuis.eta(t, s, a);
        switch (kind) {
            case Estimand::TI1:
                phi += rho * (traj.rewards[t] - nuis.v(t, s)) + rho_prev * nuis.v(t, s);
                break;
            case Estimand::MO1:
                phi += rho * (traj.rewards[t] - nuis.q(t, s, a)) + rho_prev * nuis.q_tau(t, s, a);
                break;
            case Estimand::NAIVE:
            case Estimand::PR:
                phi += rho * (traj.rewards[t] - nuis.q(t, s, a)) + rho_prev * nuis.v(t, s);
                break;
            default:
                throw validation_error("phi_trajectory: not a finite-horizon estimand");
        }
        rho_prev = rho;
    }
    return phi;
}

/// Score of one transition tuple for the stationary estimands (without the
/// per-fold initial-distribution term).
inline real_t phi_transition(const TransitionTuple& tup, const NuisanceSet& nuis, Estimand kind,
                             real_t gamma) {
    const real_t rho = nuis.w_star(tup.s) * nuis.eta(0, tup.s, tup.a);
    switch (kind) {
        case Estimand::TI2:
            return rho * (tup.r + gamma * nuis.v(0, tup.s_next) - nuis.v(0, tup.s));
        case Estimand::MO2:
            return rho * (tup.r + gamma * nuis.q_tau(0, tup.s_next, tup.a_next) -
                          nuis.q(0, tup.s, tup.a));
        case Estimand::MIS:
            return rho * tup.r;
        case Estimand::DM:
            return 0.0;
        default:
            throw validation_error("phi_transition: not a stationary estimand");
    }
}

/// Per-fold constant for the stationary estimands: (1-gamma) E_{p_e1}[v_hat]
/// for TI2/DM, (1-gamma) E_{p_e1 x pi_aug}[q_tau_hat] for MO2, 0 for MIS.
inline real_t stationary_offset(const NuisanceSet& nuis, Estimand kind, real_t gamma,
                                const std::vector<real_t>& p_e1,
                                const StochasticPolicy* aug_behavior) {
    switch (kind) {
        case Estimand::TI2:
        case Estimand::DM: {
            real_t acc = 0.0;
            for (int s = 0; s < nuis.n_states(); ++s) acc += p_e1[s] * nuis.v(0, s);
            return (1.0 - gamma) * acc;
        }
        case Estimand::MO2: {
            const StochasticPolicy& pi = aug_behavior ? *aug_behavior : nuis.pi_b_hat();
            real_t acc = 0.0;
            for (int s = 0; s < nuis.n_states(); ++s)
                for (int a = 0; a < nuis.n_actions(); ++a)
                    acc += p_e1[s] * pi.prob(0, s, a) * nuis.q_tau(0, s, a);
            return (1.0 - gamma) * acc;
        }
        case Estimand::MIS:
            return 0.0;
        default:
            throw validation_error("stationary_offset: not a stationary estimand");
    }
}

// ---------------------------------------------------------------------------
// Nuisance trainers
// ---------------------------------------------------------------------------

inline NuisanceSet train_finite_nuisances(const std::vector<Trajectory>& training, int n_states,
                                          int n_actions, int horizon,
                                          const NaturalPolicySpec& spec, const TrainerConfig& cfg,
                                          Diagnostics& diag) {
    if (cfg.oracle()) {
        NuisanceSet nuis = oracle_nuisances(*cfg.oracle_mdp, *cfg.oracle_behavior, spec);
        return cfg.corruption ? corrupt(nuis, *cfg.corruption) : nuis;
    }
    Dataset view;
    view.kind = DatasetKind::trajectories;
    view.trajectories = training;
    view.n_states = n_states;
    view.n_actions = n_actions;
    view.horizon = horizon;
    StochasticPolicy pi_b_hat = estimate_pi_b(view, &diag);
    StochasticPolicy pi_e_hat = make_evaluation_policy(pi_b_hat, spec);
    auto q_hat = fitted_q_iteration(view, pi_e_hat, &diag);
    std::vector<std::vector<real_t>> w_hat;
    if (cfg.w_method == WFitMethod::model_based) {
        w_hat = estimate_w_model_based(view, pi_e_hat, &diag);
    } else {
        auto eta_hat = compute_eta_tables(pi_b_hat, pi_e_hat, horizon, &diag);
        w_hat = estimate_w_regression(view, eta_hat,
                                      cfg.w_method == WFitMethod::regression
                                          ? WRegressionVariant::recursive
                                          : WRegressionVariant::direct,
                                      &diag);
    }
    NuisanceSet nuis(spec, std::move(pi_b_hat), std::move(q_hat), std::move(w_hat));
    return cfg.corruption ? corrupt(nuis, *cfg.corruption) : nuis;
}

inline NuisanceSet train_stationary_nuisances(const std::vector<TransitionTuple>& training,
                                              int n_states, int n_actions, real_t gamma,
                                              const std::vector<real_t>& p_e1,
                                              const NaturalPolicySpec& spec,
                                              const TrainerConfig& cfg, Diagnostics& diag) {
    if (cfg.oracle()) {
        NuisanceSet nuis = oracle_nuisances(*cfg.oracle_mdp, *cfg.oracle_behavior, spec);
        return cfg.corruption ? corrupt(nuis, *cfg.corruption) : nuis;
    }
    Dataset view;
    view.kind = DatasetKind::transitions;
    view.transitions = training;
    view.n_states = n_states;
    view.n_actions = n_actions;
    StochasticPolicy pi_b_hat = estimate_pi_b(view, &diag);
    StochasticPolicy pi_e_hat = make_evaluation_policy(pi_b_hat, spec);
    auto eta_hat = compute_eta_tables(pi_b_hat, pi_e_hat, 1, &diag);
    WeightedTransitions wt{std::span<const TransitionTuple>(training), {}};
    auto w_star = estimate_w_star(wt, eta_hat[0], gamma, p_e1, n_states, n_actions, &diag);
    auto q_hat = estimate_q_stationary(wt, pi_e_hat, gamma, spec, cfg.use_observed_next_action,
                                       &diag);
    NuisanceSet nuis(spec, std::move(pi_b_hat), std::move(q_hat), std::move(w_star));
    return cfg.corruption ? corrupt(nuis, *cfg.corruption) : nuis;
}

// ---------------------------------------------------------------------------
// Cross-fitted estimators
// ---------------------------------------------------------------------------

namespace detail {

inline EstimateReport estimate_finite(const Dataset& data, const NaturalPolicySpec& spec,
                                      Estimand kind, int k, std::uint64_t seed,
                                      const EstimatorOptions& opt) {
    data.require_kind(DatasetKind::trajectories, "finite-horizon estimator");
    spec.validate(data.n_states, data.n_actions);
    FoldPartition part = FoldPartition::make(opt.fold_scheme, data.size(), k, derive_seed(seed, 1));
    std::function<NuisanceSet(const std::vector<Trajectory>&, Diagnostics&)> trainer =
        [&](const std::vector<Trajectory>& training, Diagnostics& diag) {
            return train_finite_nuisances(training, data.n_states, data.n_actions, data.horizon,
                                          spec, opt.trainer, diag);
        };
    std::function<real_t(const Trajectory&, const NuisanceSet&)> phi =
        [kind](const Trajectory& traj, const NuisanceSet& nuis) {
            return phi_trajectory(traj, nuis, kind);
        };
    return crossfit<Trajectory, NuisanceSet>(estimand_name(kind), data.trajectories, part, seed,
                                             trainer, phi);
}

inline EstimateReport estimate_stationary(const Dataset& data, const NaturalPolicySpec& spec,
                                          Estimand kind, real_t gamma,
                                          const std::vector<real_t>& p_e1, int k,
                                          std::uint64_t seed, const EstimatorOptions& opt) {
    data.require_kind(DatasetKind::transitions, "stationary estimator");
    spec.validate(data.n_states, data.n_actions);
    FoldPartition part = FoldPartition::make(opt.fold_scheme, data.size(), k, derive_seed(seed, 1));
    std::function<NuisanceSet(const std::vector<TransitionTuple>&, Diagnostics&)> trainer =
        [&](const std::vector<TransitionTuple>& training, Diagnostics& diag) {
            return train_stationary_nuisances(training, data.n_states, data.n_actions, gamma, p_e1,
                                              spec, opt.trainer, diag);
        };
    std::function<real_t(const TransitionTuple&, const NuisanceSet&)> phi =
        [kind, gamma](const TransitionTuple& tup, const NuisanceSet& nuis) {
            return phi_transition(tup, nuis, kind, gamma);
        };
    std::function<real_t(const NuisanceSet&)> offset = [&, kind, gamma](const NuisanceSet& nuis) {
        return stationary_offset(nuis, kind, gamma, p_e1, opt.aug_behavior);
    };
    return crossfit<TransitionTuple, NuisanceSet>(estimand_name(kind), data.transitions, part,
                                                  seed, trainer, phi, offset);
}

}  // namespace detail

/// Cross-fitted efficient estimator for tilting policies, finite horizon.
inline EstimateReport estimate_TI1(const Dataset& data, const NaturalPolicySpec& spec, int k,
                                   std::uint64_t seed, const EstimatorOptions& opt = {}) {
    if (spec.kind != NaturalPolicySpec::Kind::tilting)
        throw validation_error("estimate_TI1: requires a tilting spec");
    return detail::estimate_finite(data, spec, Estimand::TI1, k, seed, opt);
}

/// Cross-fitted efficient estimator for modified-treatment policies, finite
/// horizon.
inline EstimateReport estimate_MO1(const Dataset& data, const NaturalPolicySpec& spec, int k,
                                   std::uint64_t seed, const EstimatorOptions& opt = {}) {
    if (spec.kind != NaturalPolicySpec::Kind::modified_treatment)
        throw validation_error("estimate_MO1: requires a modified-treatment spec");
    return detail::estimate_finite(data, spec, Estimand::MO1, k, seed, opt);
}

/// The pre-specified-policy score with an estimated evaluation policy plugged
/// in: q_hat replaces the inner v_hat. Kept deliberately; its bias is
/// first-order in behavior-policy error, which the robustness tests
/// demonstrate.
inline EstimateReport estimate_naive_plugin(const Dataset& data, const NaturalPolicySpec& spec,
                                            int k, std::uint64_t seed,
                                            const EstimatorOptions& opt = {}) {
    return detail::estimate_finite(data, spec, Estimand::NAIVE, k, seed, opt);
}

/// Cross-fitted efficient estimator for tilting policies in the
/// stationary-discounted setting; p_e1 is the (known) initial distribution
/// of the estimand.
inline EstimateReport estimate_TI2(const Dataset& data, const NaturalPolicySpec& spec,
                                   real_t gamma, const std::vector<real_t>& p_e1, int k,
                                   std::uint64_t seed, const EstimatorOptions& opt = {}) {
    if (spec.kind != NaturalPolicySpec::Kind::tilting)
        throw validation_error("estimate_TI2: requires a tilting spec");
    return detail::estimate_stationary(data, spec, Estimand::TI2, gamma, p_e1, k, seed, opt);
}

/// Cross-fitted efficient estimator for modified-treatment policies in the
/// stationary-discounted setting; uses the sampled next action a'.
inline EstimateReport estimate_MO2(const Dataset& data, const NaturalPolicySpec& spec,
                                   real_t gamma, const std::vector<real_t>& p_e1, int k,
                                   std::uint64_t seed, const EstimatorOptions& opt = {}) {
    if (spec.kind != NaturalPolicySpec::Kind::modified_treatment)
        throw validation_error("estimate_MO2: requires a modified-treatment spec");
    return detail::estimate_stationary(data, spec, Estimand::MO2, gamma, p_e1, k, seed, opt);
}

/// Stationary marginalized importance sampling: the mean of w* eta r under
/// the given nuisances (no cross-fitting of its own).
inline EstimateReport estimate_MIS(const Dataset& data, real_t gamma, const NuisanceSet& nuis) {
    data.require_kind(DatasetKind::transitions, "estimate_MIS");
    (void)gamma;
    EstimateReport report;
    report.estimator = "MIS";
    report.n = data.size();
    report.folds = 1;
    std::vector<real_t> values;
    values.reserve(data.size());
    real_t sum = 0.0;
    for (const auto& tup : data.transitions) {
        real_t v = phi_transition(tup, nuis, Estimand::MIS, gamma);
        values.push_back(v);
        sum += v;
    }
    report.estimate = sum / static_cast<real_t>(data.size());
    report.se_hat = std::sqrt(sample_variance(values) / static_cast<real_t>(data.size()));
    report.per_fold.push_back({0, data.size(), report.estimate});
    report.diagnostics = nuis.diagnostics();
    return report;
}

/// Direct method from given nuisances: sum_s p1(s) v_hat_1(s) for the finite
/// horizon, (1-gamma) E_{p_e1}[v_hat] for the discounted case. No sampling
/// enters given the nuisances, so the reported standard error is zero.
inline EstimateReport estimate_DM(const NuisanceSet& nuis, const std::vector<real_t>& initial,
                                  std::optional<real_t> gamma = std::nullopt) {
    EstimateReport report;
    report.estimator = "DM";
    report.folds = 1;
    real_t acc = 0.0;
    for (int s = 0; s < nuis.n_states(); ++s) acc += initial[s] * nuis.v(0, s);
    report.estimate = gamma ? (1.0 - *gamma) * acc : acc;
    report.per_fold.push_back({0, 0, report.estimate});
    report.diagnostics = nuis.diagnostics();
    return report;
}

/// Value-direct estimator with known behavior-policy ratios: phi = w* eta
/// (r + gamma v(s') - v(s)) plus (1-gamma) E_{p_e1}[v], where v_hat is
/// estimated directly rather than through q_hat. The supplied nuisance
/// tables are fold-independent; the K-fold machinery is kept for the report
/// shape.
inline EstimateReport estimate_V2(const Dataset& data, real_t gamma,
                                  const std::vector<real_t>& p_e1,
                                  const std::vector<real_t>& eta_known,
                                  const std::vector<real_t>& v_hat,
                                  const std::vector<real_t>& w_star_hat, int k,
                                  std::uint64_t seed, FoldScheme scheme = FoldScheme::random) {
    data.require_kind(DatasetKind::transitions, "estimate_V2");
    const int A = data.n_actions;
    FoldPartition part = FoldPartition::make(scheme, data.size(), k, derive_seed(seed, 1));
    struct Tables {
        const std::vector<real_t>* eta;
        const std::vector<real_t>* v;
        const std::vector<real_t>* w;
    };
    std::function<Tables(const std::vector<TransitionTuple>&, Diagnostics&)> trainer =
        [&](const std::vector<TransitionTuple>&, Diagnostics&) {
            return Tables{&eta_known, &v_hat, &w_star_hat};
        };
    std::function<real_t(const TransitionTuple&, const Tables&)> phi =
        [gamma, A](const TransitionTuple& tup, const Tables& tab) {
            real_t eta = (*tab.eta)[static_cast<std::size_t>(tup.s) * A + tup.a];
            return (*tab.w)[tup.s] * eta *
                   (tup.r + gamma * (*tab.v)[tup.s_next] - (*tab.v)[tup.s]);
        };
    std::function<real_t(const Tables&)> offset = [&, gamma](const Tables& tab) {
        real_t acc = 0.0;
        for (std::size_t s = 0; s < p_e1.size(); ++s) acc += p_e1[s] * (*tab.v)[s];
        return (1.0 - gamma) * acc;
    };
    return crossfit<TransitionTuple, Tables>("V2", data.transitions, part, seed, trainer, phi,
                                             offset);
}

// ---------------------------------------------------------------------------
// Exact phi expectations
// ---------------------------------------------------------------------------

/// Exact expectation of the estimator's phi under the true data-generating
/// process p_{pi_b}, for arbitrary (possibly corrupted) nuisance tables.
/// The bias of the population estimator is exact_phi_expectation - J; the
/// double-robustness and second-order-bias checks are built on this.
///
/// The MO2 initial term uses the true behavior policy (the auxiliary
/// (s,a) ~ p_e1 x pi_b draws are part of the data-generating process, not a
/// nuisance).
inline real_t exact_phi_expectation(const TabularDecisionProcess& mdp,
                                    const StochasticPolicy& pi_b, const NuisanceSet& nuis,
                                    Estimand kind) {
    mdp.check_policy(pi_b, "exact_phi_expectation");
    const int S = mdp.n_states, A = mdp.n_actions;
    if (kind == Estimand::TI1 || kind == Estimand::MO1 || kind == Estimand::NAIVE ||
        kind == Estimand::PR) {
        mdp.require_finite("exact_phi_expectation");
        const int H = mdp.horizon;
        auto d_b = exact_marginals_finite(mdp, pi_b);
        real_t total = 0.0;
        for (int t = 0; t < H; ++t) {
            for (int s = 0; s < S; ++s) {
                if (d_b[t][s] == 0.0) continue;
                for (int a = 0; a < A; ++a) {
                    real_t pb = pi_b.prob(t, s, a);
                    if (pb == 0.0) continue;
                    real_t rho = nuis.w(t, s) * nuis.eta(t, s, a);
                    real_t inner = (kind == Estimand::TI1) ? nuis.v(t, s) : nuis.q(t, s, a);
                    total += d_b[t][s] * pb * rho * (mdp.mean_reward(t, s, a) - inner);
                    // carried term at t+1: E[rho_t * g_{t+1}(s_{t+1}(, a_{t+1}))]
                    if (t + 1 < H) {
                        for (int sn = 0; sn < S; ++sn) {
                            real_t pt = mdp.trans(t, s, a, sn);
                            if (pt == 0.0) continue;
                            real_t g;
                            if (kind == Estimand::MO1) {
                                g = 0.0;
                                for (int an = 0; an < A; ++an)
                                    g += pi_b.prob(t + 1, sn, an) * nuis.q_tau(t + 1, sn, an);
                            } else {
                                g = nuis.v(t + 1, sn);
                            }
                            total += d_b[t][s] * pb * rho * pt * g;
                        }
                    }
                }
            }
        }
        // t = 1 boundary: w_0 eta_0 := 1
        for (int s = 0; s < S; ++s) {
            if (mdp.initial_dist[s] == 0.0) continue;
            real_t g;
            if (kind == Estimand::MO1) {
                g = 0.0;
                for (int a = 0; a < A; ++a) g += pi_b.prob(0, s, a) * nuis.q_tau(0, s, a);
            } else {
                g = nuis.v(0, s);
            }
            total += mdp.initial_dist[s] * g;
        }
        return total;
    }
    mdp.require_discounted("exact_phi_expectation");
    const std::vector<real_t>& pb_dist = mdp.p_b();
    const real_t gamma = mdp.gamma;
    real_t total = 0.0;
    for (int s = 0; s < S; ++s) {
        if (pb_dist[s] == 0.0) continue;
        for (int a = 0; a < A; ++a) {
            real_t pa = pi_b.prob(0, s, a);
            if (pa == 0.0) continue;
            real_t rho = nuis.w_star(s) * nuis.eta(0, s, a);
            real_t term = 0.0;
            switch (kind) {
                case Estimand::TI2: {
                    real_t ev = 0.0;
                    for (int sn = 0; sn < S; ++sn) ev += mdp.trans(0, s, a, sn) * nuis.v(0, sn);
                    term = rho * (mdp.mean_reward(0, s, a) + gamma * ev - nuis.v(0, s));
                    break;
                }
                case Estimand::MO2: {
                    real_t eg = 0.0;
                    for (int sn = 0; sn < S; ++sn) {
                        real_t pt = mdp.trans(0, s, a, sn);
                        if (pt == 0.0) continue;
                        real_t g = 0.0;
                        for (int an = 0; an < A; ++an)
                            g += pi_b.prob(0, sn, an) * nuis.q_tau(0, sn, an);
                        eg += pt * g;
                    }
                    term = rho * (mdp.mean_reward(0, s, a) + gamma * eg - nuis.q(0, s, a));
                    break;
                }
                case Estimand::MIS:
                    term = rho * mdp.mean_reward(0, s, a);
                    break;
                case Estimand::DM:
                    term = 0.0;
                    break;
                default:
                    throw validation_error("exact_phi_expectation: unsupported estimand");
            }
            total += pb_dist[s] * pa * term;
        }
    }
    if (kind == Estimand::TI2 || kind == Estimand::DM) {
        real_t acc = 0.0;
        for (int s = 0; s < S; ++s) acc += mdp.initial_dist[s] * nuis.v(0, s);
        total += (1.0 - gamma) * acc;
    } else if (kind == Estimand::MO2) {
        real_t acc = 0.0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                acc += mdp.initial_dist[s] * pi_b.prob(0, s, a) * nuis.q_tau(0, s, a);
        total += (1.0 - gamma) * acc;
    }
    return total;
}

/// Exact expectation of the V2 phi with known ratios eta and direct nuisance
/// tables (v_hat, w_star_hat).
inline real_t exact_v2_expectation(const TabularDecisionProcess& mdp,
                                   const StochasticPolicy& pi_b,
                                   const std::vector<real_t>& eta,
                                   const std::vector<real_t>& v_hat,
                                   const std::vector<real_t>& w_star_hat) {
    mdp.require_discounted("exact_v2_expectation");
    const int S = mdp.n_states, A = mdp.n_actions;
    const std::vector<real_t>& pb_dist = mdp.p_b();
    real_t total = 0.0;
    for (int s = 0; s < S; ++s) {
        if (pb_dist[s] == 0.0) continue;
        for (int a = 0; a < A; ++a) {
            real_t pa = pi_b.prob(0, s, a);
            if (pa == 0.0) continue;
            real_t ev = 0.0;
            for (int sn = 0; sn < S; ++sn) ev += mdp.trans(0, s, a, sn) * v_hat[sn];
            total += pb_dist[s] * pa * w_star_hat[s] * eta[mdp.sa(s, a)] *
                     (mdp.mean_reward(0, s, a) + mdp.gamma * ev - v_hat[s]);
        }
    }
    real_t acc = 0.0;
    for (int s = 0; s < S; ++s) acc += mdp.initial_dist[s] * v_hat[s];
    return total + (1.0 - mdp.gamma) * acc;
}

}  // namespace nspope

#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nsp_ope/estimators.hpp"
#include "nsp_ope/io.hpp"
#include "nsp_ope/taxi.hpp"

/// \file experiments.hpp
/// Replicated OPE comparison harness: build (or load) an environment, learn a
/// near-optimal behavior policy by q-learning, simulate single-trajectory
/// transition data of varying length, run the configured estimators with and
/// without injected misspecification, and aggregate MSE against the exact
/// policy value with 95% confidence intervals.

namespace nspope {

/// One experimental arm: a label plus an optional nuisance corruption that is
/// applied to the shared fits before estimation.
struct ExperimentArm {
    std::string name = "well_specified";
    std::optional<CorruptionSpec> corruption;
};

struct QLearningConfig {
    int iterations = 150;
    real_t learning_rate = 1.0;
    real_t epsilon_soften = 0.1;
};

struct ExperimentConfig {
    std::string env = "taxi-small";  ///< builtin name or path to an MDP JSON file
    real_t gamma = 0.98;
    json policy_spec;  ///< natural-policy spec, resolved against the env
    std::vector<long> horizons;
    int replications = 1;
    std::vector<std::string> estimators;
    std::vector<ExperimentArm> arms{ExperimentArm{}};
    QLearningConfig q_learning;
    int k = 2;
    std::uint64_t master_seed = 1;
    std::size_t burn_in = 0;
    FoldScheme fold_scheme = FoldScheme::contiguous;
    std::optional<json> behavior;  ///< explicit behavior policy; overrides q-learning
    bool oracle_nuisances = false; ///< use exact nuisances instead of fitting
    /// estimand initial state: p_e1 is a point mass here when set, otherwise
    /// the behavior chain's stationary distribution
    std::optional<int> initial_state;
    /// explicit estimand initial distribution (overrides initial_state)
    std::optional<std::vector<real_t>> initial_dist;

    void validate() const {
        if (replications < 1) throw validation_error("experiment: replications must be >= 1");
        if (horizons.empty()) throw validation_error("experiment: horizons must be nonempty");
        if (estimators.empty()) throw validation_error("experiment: estimators must be nonempty");
        if (!(gamma > 0.0 && gamma < 1.0)) throw validation_error("experiment: gamma in (0,1)");
        if (q_learning.epsilon_soften < 0.0 || q_learning.epsilon_soften >= 1.0)
            throw validation_error("experiment: epsilon_soften must lie in [0,1)");
        if (k < 2) throw validation_error("experiment: K must be >= 2");
        if (arms.empty()) throw validation_error("experiment: arms must be nonempty");
    }
};

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    try {
        cfg.env = j.value("env", std::string("taxi-small"));
        cfg.gamma = j.value("gamma", 0.98);
        cfg.policy_spec = j.at("policy");
        cfg.horizons = j.at("horizons").get<std::vector<long>>();
        cfg.replications = j.at("replications").get<int>();
        cfg.estimators = j.at("estimators").get<std::vector<std::string>>();
        if (j.contains("arms")) {
            cfg.arms.clear();
            for (const auto& arm_json : j.at("arms")) {
                ExperimentArm arm;
                arm.name = arm_json.at("name").get<std::string>();
                if (arm_json.contains("corruption") && !arm_json.at("corruption").is_null()) {
                    const auto& c = arm_json.at("corruption");
                    CorruptionSpec spec;
                    spec.target = corruption_target_from_string(c.at("target").get<std::string>());
                    spec.noise_mean = c.value("mean", 0.0);
                    spec.noise_sd = c.value("sd", 0.0);
                    arm.corruption = spec;
                }
                cfg.arms.push_back(std::move(arm));
            }
        } else if (j.contains("corruption") && !j.at("corruption").is_null()) {
            const auto& c = j.at("corruption");
            CorruptionSpec spec;
            spec.target = corruption_target_from_string(c.at("target").get<std::string>());
            spec.noise_mean = c.value("mean", 0.0);
            spec.noise_sd = c.value("sd", 0.0);
            cfg.arms = {ExperimentArm{"corrupted", spec}};
        }
        if (j.contains("q_learning")) {
            const auto& q = j.at("q_learning");
            cfg.q_learning.iterations = q.value("iterations", 150);
            cfg.q_learning.learning_rate = q.value("learning_rate", 1.0);
            cfg.q_learning.epsilon_soften = q.value("epsilon_soften", 0.1);
        }
        cfg.k = j.value("K", 2);
        cfg.master_seed = j.value("master_seed", 1ULL);
        cfg.burn_in = j.value("burn_in", 0ULL);
        cfg.fold_scheme =
            j.value("fold_scheme", std::string("contiguous")) == "random" ? FoldScheme::random
                                                                          : FoldScheme::contiguous;
        if (j.contains("behavior")) cfg.behavior = j.at("behavior");
        cfg.oracle_nuisances = j.value("oracle_nuisances", false);
        if (j.contains("initial_state")) cfg.initial_state = j.at("initial_state").get<int>();
        if (j.contains("initial_dist")) {
            if (j.at("initial_dist").is_string()) {
                if (j.at("initial_dist").get<std::string>() != "env")
                    throw validation_error("experiment: initial_dist must be an array or 'env'");
                cfg.initial_dist = std::vector<real_t>{};  // marker: use the env's own p1
            } else {
                cfg.initial_dist = j.at("initial_dist").get<std::vector<real_t>>();
            }
        }
    } catch (const json::exception& e) {
        throw validation_error(std::string("experiment config: malformed JSON: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

struct MseRow {
    std::string arm;
    std::string estimator;
    long horizon = 0;
    real_t mse = 0.0;
    real_t ci_low = 0.0;
    real_t ci_high = 0.0;
    int replications = 0;  ///< successful replications in this cell
};

struct MseTable {
    std::vector<MseRow> rows;
    real_t j_true = 0.0;

    std::string to_csv() const {
        std::ostringstream ss;
        ss.precision(17);
        ss << "arm,estimator,H,mse,ci_low,ci_high,replications\n";
        for (const auto& row : rows)
            ss << row.arm << ',' << row.estimator << ',' << row.horizon << ',' << row.mse << ','
               << row.ci_low << ',' << row.ci_high << ',' << row.replications << '\n';
        return ss.str();
    }
};

namespace detail {

inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    int workers = std::min<std::size_t>(threads, count);
    pool.reserve(workers);
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed.store(true);
                    if (error.empty()) error = e.what();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failed.load()) throw computation_error("parallel task failed: " + error);
}

}  // namespace detail

/// Runs the full protocol. Per (horizon, replication): simulate a single
/// trajectory of H transitions, fit nuisances per fold once, then evaluate
/// every (arm, estimator) pair against the exact value. Estimator failures
/// are recorded per cell, not fatal. Deterministic given the config and
/// master seed: replication seeds follow derive_seed(master, 1000 + h_index,
/// rep) and corruption seeds derive_seed(master, 2000 + arm_index, rep).
inline MseTable run_experiment(const ExperimentConfig& cfg, int threads = 1) {
    cfg.validate();
    TabularDecisionProcess mdp;
    if (cfg.env.find(".json") != std::string::npos) {
        mdp = mdp_from_json(json::parse(read_text_file(cfg.env)));
        mdp.require_discounted("experiment env");
        mdp.gamma = cfg.gamma;
    } else {
        mdp = build_taxi(cfg.env, cfg.gamma);
    }
    const int S = mdp.n_states, A = mdp.n_actions;

    StochasticPolicy pi_b =
        cfg.behavior ? policy_from_json(*cfg.behavior)
                     : q_learning(mdp, cfg.q_learning.iterations, cfg.q_learning.learning_rate,
                                  cfg.q_learning.epsilon_soften, derive_seed(cfg.master_seed, 7));
    mdp.check_policy(pi_b, "experiment behavior policy");

    // Sample the chain from its stationary law: p_b = stationary distribution
    // of (mdp, pi_b). The estimand starts from p_e1 = p_b unless a point
    // initial state is configured.
    std::vector<real_t> stationary = stationary_state_distribution(mdp, pi_b, &mdp.initial_dist);
    std::vector<real_t> env_initial = mdp.initial_dist;
    mdp.sampling_dist = stationary;
    if (cfg.initial_dist) {
        if (cfg.initial_dist->empty()) {
            mdp.initial_dist = env_initial;  // "env": the environment's own start law
        } else {
            if (cfg.initial_dist->size() != static_cast<std::size_t>(S))
                throw validation_error("experiment: initial_dist has wrong length");
            mdp.initial_dist = *cfg.initial_dist;
        }
    } else if (cfg.initial_state) {
        if (*cfg.initial_state < 0 || *cfg.initial_state >= S)
            throw validation_error("experiment: initial_state out of range");
        mdp.initial_dist.assign(S, 0.0);
        mdp.initial_dist[*cfg.initial_state] = 1.0;
    } else {
        mdp.initial_dist = stationary;
    }
    mdp.validate();

    NaturalPolicySpec spec = natural_spec_from_json(cfg.policy_spec, S, A);
    StochasticPolicy pi_e = make_evaluation_policy(pi_b, spec);
    const real_t j_true = exact_value_discounted(mdp, pi_e);

    std::vector<Estimand> estimands;
    for (const auto& name : cfg.estimators) estimands.push_back(estimand_from_string(name));

    struct Cell {
        bool ok = false;
        real_t sqerr = 0.0;
    };
    const std::size_t n_tasks = cfg.horizons.size() * static_cast<std::size_t>(cfg.replications);
    const std::size_t cells_per_task = cfg.arms.size() * estimands.size();
    std::vector<Cell> results(n_tasks * cells_per_task);

    detail::parallel_for(n_tasks, threads, [&](std::size_t task) {
        const std::size_t h_idx = task / cfg.replications;
        const int rep = static_cast<int>(task % cfg.replications);
        const long horizon = cfg.horizons[h_idx];
        std::uint64_t seed = derive_seed(cfg.master_seed, 1000 + h_idx, rep);
        Dataset data = simulate_stationary(mdp, pi_b, static_cast<std::size_t>(horizon),
                                           cfg.burn_in, seed);
        FoldPartition part =
            FoldPartition::make(cfg.fold_scheme, data.size(), cfg.k, derive_seed(seed, 1));
        // shared per-fold nuisance fits
        std::vector<std::optional<NuisanceSet>> base(cfg.k);
        std::vector<std::string> fold_errors(cfg.k);
        for (int fold = 0; fold < cfg.k; ++fold) {
            std::vector<TransitionTuple> training;
            for (std::size_t i = 0; i < data.transitions.size(); ++i)
                if (part.assignment[i] != fold) training.push_back(data.transitions[i]);
            Diagnostics diag;
            TrainerConfig trainer;
            if (cfg.oracle_nuisances) {
                trainer.oracle_mdp = &mdp;
                trainer.oracle_behavior = &pi_b;
            }
            try {
                base[fold] = train_stationary_nuisances(training, S, A, cfg.gamma,
                                                        mdp.initial_dist, spec, trainer, diag);
            } catch (const std::exception& e) {
                fold_errors[fold] = e.what();
            }
        }
        for (std::size_t arm_idx = 0; arm_idx < cfg.arms.size(); ++arm_idx) {
            const auto& arm = cfg.arms[arm_idx];
            std::vector<std::optional<NuisanceSet>> nuis(cfg.k);
            for (int fold = 0; fold < cfg.k; ++fold) {
                if (!base[fold]) continue;
                if (arm.corruption) {
                    CorruptionSpec cspec = *arm.corruption;
                    cspec.seed = derive_seed(cfg.master_seed, 2000 + arm_idx, rep, fold);
                    nuis[fold] = corrupt(*base[fold], cspec);
                } else {
                    nuis[fold] = base[fold];
                }
            }
            for (std::size_t est_idx = 0; est_idx < estimands.size(); ++est_idx) {
                Cell& cell = results[task * cells_per_task + arm_idx * estimands.size() + est_idx];
                Estimand kind = estimands[est_idx];
                try {
                    real_t weighted = 0.0;
                    for (int fold = 0; fold < cfg.k; ++fold) {
                        if (!nuis[fold]) throw computation_error(fold_errors[fold]);
                        const NuisanceSet& nf = *nuis[fold];
                        real_t offset = (kind == Estimand::MIS)
                                            ? 0.0
                                            : stationary_offset(nf, kind, cfg.gamma,
                                                                mdp.initial_dist, &pi_b);
                        real_t sum = 0.0;
                        std::size_t count = 0;
                        for (std::size_t i = 0; i < data.transitions.size(); ++i) {
                            if (part.assignment[i] != fold) continue;
                            sum += phi_transition(data.transitions[i], nf, kind, cfg.gamma);
                            ++count;
                        }
                        real_t fold_est = count ? sum / static_cast<real_t>(count) + offset : 0.0;
                        weighted += static_cast<real_t>(count) * fold_est;
                    }
                    real_t estimate = weighted / static_cast<real_t>(data.size());
                    cell.ok = true;
                    cell.sqerr = (estimate - j_true) * (estimate - j_true);
                } catch (const std::exception&) {
                    cell.ok = false;
                }
            }
        }
    });

    MseTable table;
    table.j_true = j_true;
    for (std::size_t arm_idx = 0; arm_idx < cfg.arms.size(); ++arm_idx)
        for (std::size_t est_idx = 0; est_idx < estimands.size(); ++est_idx)
            for (std::size_t h_idx = 0; h_idx < cfg.horizons.size(); ++h_idx) {
                std::vector<real_t> errs;
                for (int rep = 0; rep < cfg.replications; ++rep) {
                    std::size_t task = h_idx * cfg.replications + rep;
                    const Cell& cell =
                        results[task * cells_per_task + arm_idx * estimands.size() + est_idx];
                    if (cell.ok) errs.push_back(cell.sqerr);
                }
                MseRow row;
                row.arm = cfg.arms[arm_idx].name;
                row.estimator = cfg.estimators[est_idx];
                row.horizon = cfg.horizons[h_idx];
                row.replications = static_cast<int>(errs.size());
                if (!errs.empty()) {
                    row.mse = mean_of(errs);
                    real_t half =
                        1.959963984540054 *
                        std::sqrt(sample_variance(errs) / static_cast<real_t>(errs.size()));
                    row.ci_low = row.mse - half;
                    row.ci_high = row.mse + half;
                }
                table.rows.push_back(std::move(row));
            }
    return table;
}

}  // namespace nspope

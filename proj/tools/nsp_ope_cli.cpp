// Command-line front end for the nsp-ope library: simulate data, compute
// efficiency bounds, run single estimates, run replicated experiments, and
// run the enumeration-oracle selftest.
//
// Exit codes: 0 success, 1 configuration/validation error, 2 computation
// error. Every file-producing subcommand also writes <output>.manifest.json
// with input hashes, the seed, and the tool version.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nsp_ope/nsp_ope.hpp"

namespace {

using namespace nspope;

struct PolicyBundle {
    std::optional<StochasticPolicy> behavior;
    json natural;
};

PolicyBundle load_bundle(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, true, true);
    PolicyBundle bundle;
    if (j.contains("behavior") && !j.at("behavior").is_null())
        bundle.behavior = policy_from_json(j.at("behavior"));
    if (!j.contains("natural")) throw validation_error("policy bundle: missing 'natural' spec");
    bundle.natural = j.at("natural");
    return bundle;
}

void write_manifest(const std::string& output, const std::string& subcommand,
                    const std::vector<std::string>& inputs, std::uint64_t seed,
                    const json& extra = json::object()) {
    write_text_file(output + ".manifest.json",
                    make_manifest(subcommand, inputs, seed, extra).dump(2) + "\n");
}

void emit(const std::string& output, const std::string& content) {
    if (output.empty() || output == "-")
        std::cout << content;
    else
        write_text_file(output, content);
}

int run_simulate(const std::string& mdp_path, const std::string& behavior_path, std::size_t n,
                 std::size_t burn_in, bool iid, std::uint64_t seed, const std::string& output) {
    TabularDecisionProcess mdp = mdp_from_json(json::parse(read_text_file(mdp_path)));
    StochasticPolicy pi_b = policy_from_json(json::parse(read_text_file(behavior_path)));
    Dataset data;
    if (mdp.is_finite())
        data = simulate_finite(mdp, pi_b, n, seed);
    else if (iid)
        data = simulate_transitions_iid(mdp, pi_b, n, seed);
    else
        data = simulate_stationary(mdp, pi_b, n, burn_in, seed);
    write_dataset_jsonl(output, data);
    write_manifest(output, "simulate", {mdp_path, behavior_path}, seed,
                   json{{"n", n}, {"burn_in", burn_in}, {"iid", iid}});
    return 0;
}

int run_bounds(const std::string& mdp_path, const std::string& policy_path,
               const std::vector<int>& nmdp_horizons, const std::string& output) {
    TabularDecisionProcess mdp = mdp_from_json(json::parse(read_text_file(mdp_path)));
    PolicyBundle bundle = load_bundle(policy_path);
    if (!bundle.behavior)
        throw validation_error("bounds: policy bundle must include the behavior policy");
    NaturalPolicySpec spec =
        natural_spec_from_json(bundle.natural, mdp.n_states, mdp.n_actions);
    StochasticPolicy pi_e = make_evaluation_policy(*bundle.behavior, spec);
    const bool tilting = spec.kind == NaturalPolicySpec::Kind::tilting;

    json out;
    auto bounds_json = [](const EfficiencyBounds& b) {
        json j{{"value", b.value},
               {"per_time", b.per_time},
               {"inflation_vs_prespecified", b.inflation_vs_prespecified},
               {"c_eta", b.c_eta},
               {"c_w", b.c_w}};
        if (b.upper_bound_cap) j["upper_bound_cap"] = *b.upper_bound_cap;
        return j;
    };
    if (mdp.is_finite()) {
        Estimand est = tilting ? Estimand::TI1 : Estimand::MO1;
        out["estimand"] = estimand_name(est);
        out["J"] = exact_value_finite(mdp, pi_e);
        out[tilting ? "TI1" : "MO1"] = bounds_json(bound_finite(mdp, *bundle.behavior, spec, est));
        out["PR"] = bounds_json(bound_finite(mdp, *bundle.behavior, spec, Estimand::PR));
        if (!nmdp_horizons.empty()) {
            json rows = json::array();
            for (const CurseRow& row :
                 curse_check(mdp, *bundle.behavior, spec, nmdp_horizons)) {
                rows.push_back({{"H", row.horizon},
                                {"nmdp_bound", row.nmdp_bound},
                                {"tmdp_bound", row.tmdp_bound},
                                {"lower_bound", row.lower_bound},
                                {"c_min", row.c_min},
                                {"v2_min", row.v2_min},
                                {"tmdp_cap", row.tmdp_cap}});
            }
            out["curse"] = rows;
        }
    } else {
        Estimand est = tilting ? Estimand::TI2 : Estimand::MO2;
        out["estimand"] = estimand_name(est);
        out["J"] = exact_value_discounted(mdp, pi_e);
        out[tilting ? "TI2" : "MO2"] =
            bounds_json(bound_discounted(mdp, *bundle.behavior, spec, est));
        out["PR"] = bounds_json(bound_discounted(mdp, *bundle.behavior, spec, Estimand::PR));
        if (!nmdp_horizons.empty()) {
            json rows = json::array();
            for (const CurseRow& row :
                 curse_check(mdp, *bundle.behavior, spec, nmdp_horizons)) {
                rows.push_back({{"H", row.horizon},
                                {"nmdp_bound", row.nmdp_bound},
                                {"tmdp_bound", row.tmdp_bound},
                                {"lower_bound", row.lower_bound},
                                {"c_min", row.c_min},
                                {"v2_min", row.v2_min},
                                {"tmdp_cap", row.tmdp_cap}});
            }
            out["curse"] = rows;
        }
    }
    emit(output, out.dump(2) + "\n");
    if (!output.empty() && output != "-")
        write_manifest(output, "bounds", {mdp_path, policy_path}, 0);
    return 0;
}

int run_estimate(const std::string& data_path, const std::string& policy_path,
                 const std::string& estimator, const std::string& mdp_path, bool oracle, int k,
                 std::uint64_t seed, const std::string& fold_scheme_name,
                 const std::string& corrupt_target, real_t corrupt_mean, real_t corrupt_sd,
                 std::uint64_t corrupt_seed, const std::string& output,
                 const std::string& format) {
    Dataset data = read_dataset_jsonl(data_path);
    PolicyBundle bundle = load_bundle(policy_path);
    NaturalPolicySpec spec = natural_spec_from_json(bundle.natural, data.n_states, data.n_actions);
    Estimand kind = estimand_from_string(estimator);

    std::optional<TabularDecisionProcess> mdp;
    if (!mdp_path.empty()) mdp = mdp_from_json(json::parse(read_text_file(mdp_path)));

    EstimatorOptions opt;
    opt.fold_scheme =
        fold_scheme_name == "random" ? FoldScheme::random : FoldScheme::contiguous;
    if (oracle) {
        if (!mdp || !bundle.behavior)
            throw validation_error(
                "estimate: --oracle requires --mdp and a bundle with the behavior policy");
        opt.trainer.oracle_mdp = &*mdp;
        opt.trainer.oracle_behavior = &*bundle.behavior;
    }
    if (!corrupt_target.empty()) {
        CorruptionSpec cspec;
        cspec.target = corruption_target_from_string(corrupt_target);
        cspec.noise_mean = corrupt_mean;
        cspec.noise_sd = corrupt_sd;
        cspec.seed = corrupt_seed;
        opt.trainer.corruption = cspec;
    }
    if (bundle.behavior) opt.aug_behavior = &*bundle.behavior;

    auto need_mdp = [&]() -> const TabularDecisionProcess& {
        if (!mdp)
            throw validation_error("estimate: estimator '" + estimator + "' requires --mdp for "
                                   "gamma and the initial distribution");
        return *mdp;
    };

    EstimateReport report;
    switch (kind) {
        case Estimand::TI1:
            report = estimate_TI1(data, spec, k, seed, opt);
            break;
        case Estimand::MO1:
            report = estimate_MO1(data, spec, k, seed, opt);
            break;
        case Estimand::NAIVE:
            report = estimate_naive_plugin(data, spec, k, seed, opt);
            break;
        case Estimand::TI2: {
            const auto& m = need_mdp();
            report = estimate_TI2(data, spec, m.gamma, m.initial_dist, k, seed, opt);
            break;
        }
        case Estimand::MO2: {
            const auto& m = need_mdp();
            report = estimate_MO2(data, spec, m.gamma, m.initial_dist, k, seed, opt);
            break;
        }
        case Estimand::MIS: {
            const auto& m = need_mdp();
            Diagnostics diag;
            NuisanceSet nuis = train_stationary_nuisances(data.transitions, data.n_states,
                                                          data.n_actions, m.gamma, m.initial_dist,
                                                          spec, opt.trainer, diag);
            report = estimate_MIS(data, m.gamma, nuis);
            report.seed = seed;
            break;
        }
        case Estimand::DM: {
            const auto& m = need_mdp();
            Diagnostics diag;
            if (data.kind == DatasetKind::transitions) {
                NuisanceSet nuis = train_stationary_nuisances(
                    data.transitions, data.n_states, data.n_actions, m.gamma, m.initial_dist,
                    spec, opt.trainer, diag);
                report = estimate_DM(nuis, m.initial_dist, m.gamma);
            } else {
                NuisanceSet nuis =
                    train_finite_nuisances(data.trajectories, data.n_states, data.n_actions,
                                           data.horizon, spec, opt.trainer, diag);
                report = estimate_DM(nuis, m.initial_dist);
            }
            report.n = data.size();
            report.seed = seed;
            break;
        }
        case Estimand::V2: {
            const auto& m = need_mdp();
            if (!bundle.behavior)
                throw validation_error(
                    "estimate: V2 requires a known behavior policy in the bundle");
            StochasticPolicy pi_e = make_evaluation_policy(*bundle.behavior, spec);
            Diagnostics diag;
            auto eta = compute_eta_tables(*bundle.behavior, pi_e, 1, &diag);
            WeightedTransitions wt{std::span<const TransitionTuple>(data.transitions), {}};
            auto v_hat =
                estimate_v_direct(wt, eta[0], m.gamma, data.n_states, data.n_actions, &diag);
            auto w_star = estimate_w_star(wt, eta[0], m.gamma, m.initial_dist, data.n_states,
                                          data.n_actions, &diag);
            report = estimate_V2(data, m.gamma, m.initial_dist, eta[0], v_hat, w_star, k, seed,
                                 opt.fold_scheme);
            report.diagnostics.merge(diag);
            break;
        }
        case Estimand::PR:
            throw validation_error("estimate: PR is a bound estimand, not an estimator");
    }

    std::string content = format == "csv"
                              ? report_csv_header() + "\n" + report_to_csv_row(report) + "\n"
                              : report_to_json(report).dump(2) + "\n";
    emit(output, content);
    if (!output.empty() && output != "-") {
        std::vector<std::string> inputs{data_path, policy_path};
        if (!mdp_path.empty()) inputs.push_back(mdp_path);
        write_manifest(output, "estimate", inputs, seed,
                       json{{"estimator", estimator}, {"K", k}});
    }
    return 0;
}

int run_experiment_cmd(const std::string& config_path, const std::string& output, int threads,
                       std::optional<std::uint64_t> seed_override, const std::string& format) {
    json cfg_json = json::parse(read_text_file(config_path), nullptr, true, true);
    ExperimentConfig cfg = experiment_config_from_json(cfg_json);
    if (seed_override) cfg.master_seed = *seed_override;
    MseTable table = run_experiment(cfg, threads);
    if (format == "json") {
        json rows = json::array();
        for (const auto& row : table.rows)
            rows.push_back({{"arm", row.arm},
                            {"estimator", row.estimator},
                            {"H", row.horizon},
                            {"mse", row.mse},
                            {"ci_low", row.ci_low},
                            {"ci_high", row.ci_high},
                            {"replications", row.replications}});
        emit(output, json{{"j_true", table.j_true}, {"rows", rows}}.dump(2) + "\n");
    } else {
        emit(output, table.to_csv());
    }
    if (!output.empty() && output != "-")
        write_manifest(output, "experiment", {config_path}, cfg.master_seed,
                       json{{"j_true", table.j_true}, {"threads", threads}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Off-policy evaluation of natural stochastic policies on tabular MDPs"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap for replications")
        ->envname("NSP_OPE_THREADS");

    std::string mdp_path, behavior_path, policy_path, data_path, config_path;
    std::string output, format = "json", estimator, fold_scheme = "random";
    std::string corrupt_target;
    double corrupt_mean = 0.0, corrupt_sd = 0.0;
    std::uint64_t seed = 0, corrupt_seed = 0;
    std::size_t n = 0, burn_in = 0;
    bool iid = false, oracle = false;
    int k = 2;
    std::vector<int> nmdp_horizons;
    bool has_seed_override = false;

    auto* sim = app.add_subcommand("simulate", "simulate a dataset to JSON lines");
    sim->add_option("--mdp", mdp_path, "MDP JSON file")->required();
    sim->add_option("--behavior", behavior_path, "behavior policy JSON file")->required();
    sim->add_option("--n", n, "trajectories (finite) or transitions (stationary)")->required();
    sim->add_option("--burn-in", burn_in, "chain burn-in steps (stationary)");
    sim->add_flag("--iid", iid, "draw i.i.d. transitions from the sampling distribution");
    sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--output", output, "output dataset path")->required();

    auto* bnd = app.add_subcommand("bounds", "exact efficiency bounds for a policy spec");
    bnd->add_option("--mdp", mdp_path, "MDP JSON file")->required();
    bnd->add_option("--policy", policy_path, "policy bundle (behavior + natural spec)")->required();
    bnd->add_option("--nmdp-horizons", nmdp_horizons, "also report NMDP bounds for these H");
    bnd->add_option("--output", output, "output JSON path ('-' for stdout)");

    auto* est = app.add_subcommand("estimate", "run one estimator on a dataset");
    est->add_option("--data", data_path, "dataset JSONL file")->required();
    est->add_option("--policy", policy_path, "policy bundle (natural spec; behavior optional)")
        ->required();
    est->add_option("--estimator", estimator, "TI1|MO1|NAIVE|TI2|MO2|MIS|DM|V2")->required();
    est->add_option("--mdp", mdp_path, "MDP JSON (gamma, initial distribution, oracle mode)");
    est->add_flag("--oracle", oracle, "use exact nuisances from --mdp");
    est->add_option("--K", k, "number of folds");
    est->add_option("--seed", seed, "RNG seed");
    est->add_option("--fold-scheme", fold_scheme, "random|contiguous");
    est->add_option("--corrupt-target", corrupt_target, "q|w|w_star|pi_b");
    est->add_option("--corrupt-mean", corrupt_mean, "corruption noise mean");
    est->add_option("--corrupt-sd", corrupt_sd, "corruption noise sd");
    est->add_option("--corrupt-seed", corrupt_seed, "corruption noise seed");
    est->add_option("--output", output, "output path ('-' for stdout)");
    est->add_option("--format", format, "json|csv");

    auto* exp = app.add_subcommand("experiment", "replicated MSE comparison");
    exp->add_option("--config", config_path, "experiment config JSON")->required();
    exp->add_option("--output", output, "output CSV path")->required();
    exp->add_option("--format", format, "csv|json");
    auto* seed_opt = exp->add_option("--seed", seed, "override the config master seed");
    (void)has_seed_override;

    auto* self = app.add_subcommand("selftest", "run the enumeration-oracle invariant suite");
    (void)self;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed())
            return run_simulate(mdp_path, behavior_path, n, burn_in, iid, seed, output);
        if (bnd->parsed()) return run_bounds(mdp_path, policy_path, nmdp_horizons, output);
        if (est->parsed())
            return run_estimate(data_path, policy_path, estimator, mdp_path, oracle, k, seed,
                                fold_scheme, corrupt_target, corrupt_mean, corrupt_sd,
                                corrupt_seed, output, format);
        if (exp->parsed()) {
            std::optional<std::uint64_t> seed_override;
            if (seed_opt->count() > 0) seed_override = seed;
            return run_experiment_cmd(config_path, output, threads, seed_override, format);
        }
        if (self->parsed()) return nspope::run_selftest(std::cout) ? 0 : 2;
    } catch (const nspope::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nspope::computation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

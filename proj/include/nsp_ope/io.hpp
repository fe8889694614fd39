#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsp_ope/crossfit.hpp"
#include "nsp_ope/nuisance.hpp"
#include "nsp_ope/policies.hpp"

/// \file io.hpp
/// File formats: JSON for processes, policies, policy specs, nuisance tables,
/// and reports; JSON-lines for datasets. Schemas are documented under docs/.

namespace nspope {

using json = nlohmann::json;

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write file: " + path);
    out << content;
}

/// FNV-1a 64-bit content hash, hex encoded; used in run manifests.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Decision process
// ---------------------------------------------------------------------------

inline json mdp_to_json(const TabularDecisionProcess& mdp) {
    json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["flavor"] = mdp.is_finite() ? "finite_horizon" : "stationary_discounted";
    if (mdp.is_finite()) {
        j["horizon"] = mdp.horizon;
        j["time_varying"] = mdp.time_varying;
    } else {
        j["gamma"] = mdp.gamma;
    }
    j["r_max"] = mdp.r_max;
    json trans = json::array();
    for (const auto& kernel : mdp.transition) {
        json slice = json::array();
        for (int s = 0; s < mdp.n_states; ++s) {
            json per_state = json::array();
            for (int a = 0; a < mdp.n_actions; ++a) {
                json row = json::array();
                for (int sn = 0; sn < mdp.n_states; ++sn)
                    row.push_back(kernel[mdp.sa(s, a) * mdp.n_states + sn]);
                per_state.push_back(row);
            }
            slice.push_back(per_state);
        }
        trans.push_back(slice);
    }
    j["transition"] = trans;
    json rew = json::array();
    for (const auto& slice : mdp.rewards) {
        json per_slice = json::array();
        for (int s = 0; s < mdp.n_states; ++s) {
            json per_state = json::array();
            for (int a = 0; a < mdp.n_actions; ++a) {
                const RewardDist& dist = slice[mdp.sa(s, a)];
                if (dist.size() == 1 && dist[0].prob == 1.0) {
                    per_state.push_back(dist[0].value);
                } else {
                    json atoms = json::array();
                    for (const auto& atom : dist) atoms.push_back({atom.value, atom.prob});
                    per_state.push_back(atoms);
                }
            }
            per_slice.push_back(per_state);
        }
        rew.push_back(per_slice);
    }
    j["rewards"] = rew;
    j["initial_dist"] = mdp.initial_dist;
    if (!mdp.sampling_dist.empty()) j["sampling_dist"] = mdp.sampling_dist;
    return j;
}

inline TabularDecisionProcess mdp_from_json(const json& j) {
    TabularDecisionProcess mdp;
    try {
        mdp.n_states = j.at("n_states").get<int>();
        mdp.n_actions = j.at("n_actions").get<int>();
        std::string flavor = j.at("flavor").get<std::string>();
        if (flavor == "finite_horizon") {
            mdp.flavor = Flavor::finite_horizon;
            mdp.horizon = j.at("horizon").get<int>();
            mdp.time_varying = j.value("time_varying", false);
        } else if (flavor == "stationary_discounted") {
            mdp.flavor = Flavor::stationary_discounted;
            mdp.gamma = j.at("gamma").get<real_t>();
        } else {
            throw validation_error("mdp: unknown flavor '" + flavor + "'");
        }
        mdp.r_max = j.at("r_max").get<real_t>();
        for (const auto& slice : j.at("transition")) {
            std::vector<real_t> kernel;
            kernel.reserve(static_cast<std::size_t>(mdp.n_states) * mdp.n_states * mdp.n_actions);
            for (const auto& per_state : slice)
                for (const auto& row : per_state)
                    for (const auto& p : row) kernel.push_back(p.get<real_t>());
            mdp.transition.push_back(std::move(kernel));
        }
        for (const auto& slice : j.at("rewards")) {
            std::vector<RewardDist> dists;
            for (const auto& per_state : slice)
                for (const auto& cell : per_state) {
                    RewardDist dist;
                    if (cell.is_number()) {
                        dist.push_back({cell.get<real_t>(), 1.0});
                    } else {
                        for (const auto& atom : cell)
                            dist.push_back({atom.at(0).get<real_t>(), atom.at(1).get<real_t>()});
                    }
                    dists.push_back(std::move(dist));
                }
            mdp.rewards.push_back(std::move(dists));
        }
        mdp.initial_dist = j.at("initial_dist").get<std::vector<real_t>>();
        if (j.contains("sampling_dist"))
            mdp.sampling_dist = j.at("sampling_dist").get<std::vector<real_t>>();
    } catch (const json::exception& e) {
        throw validation_error(std::string("mdp: malformed JSON: ") + e.what());
    }
    mdp.validate();
    return mdp;
}

// ---------------------------------------------------------------------------
// Policies and natural-policy specs
// ---------------------------------------------------------------------------

inline json policy_to_json(const StochasticPolicy& pi) {
    json slices = json::array();
    for (const auto& slice : pi.raw()) {
        json per_state = json::array();
        for (int s = 0; s < pi.n_states(); ++s) {
            json row = json::array();
            for (int a = 0; a < pi.n_actions(); ++a)
                row.push_back(slice[static_cast<std::size_t>(s) * pi.n_actions() + a]);
            per_state.push_back(row);
        }
        slices.push_back(per_state);
    }
    return json{{"n_states", pi.n_states()}, {"n_actions", pi.n_actions()}, {"probs", slices}};
}

inline StochasticPolicy policy_from_json(const json& j) {
    try {
        int s_count = j.at("n_states").get<int>();
        int a_count = j.at("n_actions").get<int>();
        std::vector<std::vector<real_t>> probs;
        for (const auto& slice : j.at("probs")) {
            std::vector<real_t> flat;
            flat.reserve(static_cast<std::size_t>(s_count) * a_count);
            for (const auto& row : slice)
                for (const auto& p : row) flat.push_back(p.get<real_t>());
            probs.push_back(std::move(flat));
        }
        return StochasticPolicy(s_count, a_count, std::move(probs));
    } catch (const json::exception& e) {
        throw validation_error(std::string("policy: malformed JSON: ") + e.what());
    }
}

inline json natural_spec_to_json(const NaturalPolicySpec& spec) {
    json j;
    if (spec.kind == NaturalPolicySpec::Kind::tilting) {
        j["type"] = "tilting";
        j["u"] = spec.u.size() == 1 ? json(spec.u[0]) : json(spec.u);
    } else {
        j["type"] = "modified_treatment";
        // flat row-major tables (state-major, action-minor), marked explicitly
        j["tau"] = spec.tau.size() == 1 ? json(spec.tau[0]) : json(spec.tau);
        j["layout"] = "flat";
    }
    return j;
}

/// Parses a natural-policy spec. Tokens: "ceil_half" for u(a) = ceil(a/2) on
/// 1-indexed actions, and "shift_mod" (with optional "modulus", default |A|)
/// for tau(s,a) = (s+a) mod m.
inline NaturalPolicySpec natural_spec_from_json(const json& j, int n_states, int n_actions) {
    try {
        std::string type = j.at("type").get<std::string>();
        if (type == "tilting") {
            const auto& u = j.at("u");
            if (u.is_string()) {
                if (u.get<std::string>() == "ceil_half")
                    return NaturalPolicySpec::ceil_half_tilting(n_actions);
                throw validation_error("tilting: unknown token '" + u.get<std::string>() + "'");
            }
            NaturalPolicySpec spec;
            spec.kind = NaturalPolicySpec::Kind::tilting;
            if (u.at(0).is_array())
                spec.u = u.get<std::vector<std::vector<real_t>>>();
            else
                spec.u = {u.get<std::vector<real_t>>()};
            spec.validate(n_states, n_actions);
            return spec;
        }
        if (type == "modified_treatment") {
            const auto& tau = j.at("tau");
            if (tau.is_string()) {
                if (tau.get<std::string>() == "shift_mod") {
                    int modulus = j.value("modulus", n_actions);
                    if (modulus != n_actions)
                        throw validation_error("shift_mod: modulus must equal the action count");
                    return NaturalPolicySpec::shift_mod_modified(n_states, n_actions);
                }
                throw validation_error("modified_treatment: unknown token '" +
                                       tau.get<std::string>() + "'");
            }
            NaturalPolicySpec spec;
            spec.kind = NaturalPolicySpec::Kind::modified_treatment;
            // accepted layouts: flat [s*A], flat slices [t][s*A] (marked
            // "layout": "flat"), nested [s][a], or nested [t][s][a]
            if (j.value("layout", std::string()) == "flat") {
                if (tau.at(0).is_array())
                    spec.tau = tau.get<std::vector<std::vector<int>>>();
                else
                    spec.tau = {tau.get<std::vector<int>>()};
            } else if (tau.at(0).is_number()) {
                spec.tau = {tau.get<std::vector<int>>()};
            } else if (tau.at(0).at(0).is_array()) {
                for (const auto& slice : tau) {
                    std::vector<int> flat;
                    for (const auto& row : slice)
                        for (const auto& v : row) flat.push_back(v.get<int>());
                    spec.tau.push_back(std::move(flat));
                }
            } else {
                std::vector<int> flat;
                for (const auto& row : tau)
                    for (const auto& v : row) flat.push_back(v.get<int>());
                spec.tau.push_back(std::move(flat));
            }
            spec.validate(n_states, n_actions);
            return spec;
        }
        throw validation_error("natural spec: unknown type '" + type + "'");
    } catch (const json::exception& e) {
        throw validation_error(std::string("natural spec: malformed JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Datasets (JSON lines, header record first)
// ---------------------------------------------------------------------------

inline void write_dataset_jsonl(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write file: " + path);
    json header{{"kind", data.kind == DatasetKind::trajectories ? "trajectories" : "transitions"},
                {"n_states", data.n_states},
                {"n_actions", data.n_actions},
                {"seed", data.seed}};
    if (data.kind == DatasetKind::trajectories) header["horizon"] = data.horizon;
    out << header.dump() << "\n";
    if (data.kind == DatasetKind::trajectories) {
        for (const auto& traj : data.trajectories)
            out << json{{"s", traj.states}, {"a", traj.actions}, {"r", traj.rewards}}.dump()
                << "\n";
    } else {
        for (const auto& tup : data.transitions)
            out << json{{"s", tup.s}, {"a", tup.a}, {"r", tup.r}, {"sn", tup.s_next},
                        {"an", tup.a_next}}
                       .dump()
                << "\n";
    }
}

inline Dataset read_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw validation_error("dataset: empty file " + path);
    Dataset data;
    try {
        json header = json::parse(line);
        std::string kind = header.at("kind").get<std::string>();
        data.kind = kind == "trajectories" ? DatasetKind::trajectories : DatasetKind::transitions;
        if (kind != "trajectories" && kind != "transitions")
            throw validation_error("dataset: unknown kind '" + kind + "'");
        data.n_states = header.at("n_states").get<int>();
        data.n_actions = header.at("n_actions").get<int>();
        data.seed = header.value("seed", 0ULL);
        if (data.kind == DatasetKind::trajectories) data.horizon = header.at("horizon").get<int>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            if (data.kind == DatasetKind::trajectories) {
                Trajectory traj;
                traj.states = rec.at("s").get<std::vector<int>>();
                traj.actions = rec.at("a").get<std::vector<int>>();
                traj.rewards = rec.at("r").get<std::vector<real_t>>();
                if (traj.horizon() != data.horizon ||
                    traj.states.size() != traj.actions.size() + 1)
                    throw validation_error("dataset: trajectory record has wrong lengths");
                data.trajectories.push_back(std::move(traj));
            } else {
                data.transitions.push_back({rec.at("s").get<int>(), rec.at("a").get<int>(),
                                            rec.at("r").get<real_t>(), rec.at("sn").get<int>(),
                                            rec.value("an", 0)});
            }
        }
    } catch (const json::exception& e) {
        throw validation_error(std::string("dataset: malformed JSON lines: ") + e.what());
    }
    if (data.size() == 0) throw validation_error("dataset: no records in " + path);
    return data;
}

// ---------------------------------------------------------------------------
// Nuisance tables
// ---------------------------------------------------------------------------

inline json nuisances_to_json(const NuisanceSet& nuis) {
    json j;
    j["kind"] = nuis.finite_horizon() ? "finite" : "stationary";
    j["spec"] = natural_spec_to_json(nuis.spec());
    j["pi_b"] = policy_to_json(nuis.pi_b_hat());
    j["q"] = nuis.q_table();
    if (nuis.finite_horizon())
        j["w"] = nuis.w_table();
    else
        j["w_star"] = nuis.w_star_table();
    return j;
}

inline NuisanceSet nuisances_from_json(const json& j) {
    try {
        StochasticPolicy pi_b = policy_from_json(j.at("pi_b"));
        NaturalPolicySpec spec =
            natural_spec_from_json(j.at("spec"), pi_b.n_states(), pi_b.n_actions());
        auto q = j.at("q").get<std::vector<std::vector<real_t>>>();
        if (j.at("kind").get<std::string>() == "finite") {
            auto w = j.at("w").get<std::vector<std::vector<real_t>>>();
            return NuisanceSet(spec, std::move(pi_b), std::move(q), std::move(w));
        }
        auto w_star = j.at("w_star").get<std::vector<real_t>>();
        return NuisanceSet(spec, std::move(pi_b), std::move(q[0]), std::move(w_star));
    } catch (const json::exception& e) {
        throw validation_error(std::string("nuisances: malformed JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json report_to_json(const EstimateReport& report) {
    json folds = json::array();
    for (const auto& f : report.per_fold)
        folds.push_back({{"fold", f.fold}, {"size", f.size}, {"estimate", f.estimate}});
    json diag(report.diagnostics.counters);
    return json{{"estimator", report.estimator}, {"estimate", report.estimate},
                {"se", report.se_hat},           {"n", report.n},
                {"K", report.folds},             {"seed", report.seed},
                {"per_fold", folds},             {"diagnostics", diag}};
}

inline std::string report_csv_header() { return "estimator,n,estimate,se,K,seed,diagnostics"; }

inline std::string report_to_csv_row(const EstimateReport& report) {
    std::ostringstream ss;
    ss.precision(17);
    ss << report.estimator << ',' << report.n << ',' << report.estimate << ',' << report.se_hat
       << ',' << report.folds << ',' << report.seed << ',';
    bool first = true;
    for (const auto& [k, v] : report.diagnostics.counters) {
        if (!first) ss << ';';
        ss << k << '=' << v;
        first = false;
    }
    return ss.str();
}

/// Manifest written next to every CLI output: input hashes, seed, version.
inline json make_manifest(const std::string& subcommand,
                          const std::vector<std::string>& input_paths, std::uint64_t seed,
                          const json& extra = json::object()) {
    json inputs = json::object();
    for (const auto& path : input_paths) inputs[path] = fnv1a_hex(read_text_file(path));
    json j{{"tool", "nsp-ope"},
           {"version", "0.1.0"},
           {"subcommand", subcommand},
           {"inputs", inputs},
           {"seed", seed}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

}  // namespace nspope

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "nsp_ope/io.hpp"
#include "nsp_ope/random_instances.hpp"
#include "nsp_ope/simulate.hpp"

using namespace nspope;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(NSP_OPE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("serialization round trips") {
    SECTION("process JSON") {
        auto mdp = random_finite_mdp(1, 3, 2, 2, true);
        auto back = mdp_from_json(mdp_to_json(mdp));
        CHECK(back.n_states == mdp.n_states);
        CHECK(back.horizon == mdp.horizon);
        for (std::size_t t = 0; t < mdp.transition.size(); ++t)
            CHECK(back.transition[t] == mdp.transition[t]);
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a)
                CHECK(back.mean_reward(1, s, a) == Catch::Approx(mdp.mean_reward(1, s, a)));
    }
    SECTION("policy and spec JSON") {
        auto pi = random_policy(2, 3, 4);
        auto back = policy_from_json(policy_to_json(pi));
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 4; ++a) CHECK(back.prob(0, s, a) == pi.prob(0, s, a));
        auto spec = NaturalPolicySpec::ceil_half_tilting(6);
        CHECK(spec.u[0] == std::vector<real_t>{1, 1, 2, 2, 3, 3});
        auto parsed = natural_spec_from_json(json{{"type", "tilting"}, {"u", "ceil_half"}}, 3, 6);
        CHECK(parsed.u == spec.u);
        auto shift = natural_spec_from_json(json{{"type", "modified_treatment"},
                                                 {"tau", "shift_mod"}},
                                            4, 3);
        CHECK(shift.tau_at(0, 2, 2, 3) == (2 + 2) % 3);
        auto round = natural_spec_from_json(natural_spec_to_json(shift), 4, 3);
        CHECK(round.tau == shift.tau);
    }
    SECTION("datasets survive the JSONL round trip") {
        auto mdp = random_finite_mdp(3, 2, 2, 2);
        auto pi = random_policy(4, 2, 2);
        auto data = simulate_finite(mdp, pi, 25, 5);
        TempFile file("roundtrip_traj.jsonl");
        write_dataset_jsonl(file.path, data);
        auto back = read_dataset_jsonl(file.path);
        REQUIRE(back.trajectories.size() == data.trajectories.size());
        CHECK(back.horizon == data.horizon);
        for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
            CHECK(back.trajectories[i].states == data.trajectories[i].states);
            CHECK(back.trajectories[i].rewards == data.trajectories[i].rewards);
        }
        auto d2 = random_discounted_mdp(6, 2, 2, 0.9);
        auto trans = simulate_stationary(d2, pi, 30, 0, 7);
        TempFile file2("roundtrip_trans.jsonl");
        write_dataset_jsonl(file2.path, trans);
        auto back2 = read_dataset_jsonl(file2.path);
        REQUIRE(back2.transitions.size() == trans.transitions.size());
        CHECK(back2.transitions[5].s == trans.transitions[5].s);
        CHECK(back2.transitions[5].a_next == trans.transitions[5].a_next);
    }
    SECTION("nuisance tables round trip with compatibility re-derived") {
        auto mdp = random_discounted_mdp(8, 3, 2, 0.9);
        auto pi_b = random_policy(9, 3, 2);
        auto spec = NaturalPolicySpec::tilting({1.0, 2.0});
        NuisanceSet nuis = oracle_nuisances(mdp, pi_b, spec);
        auto back = nuisances_from_json(nuisances_to_json(nuis));
        for (int s = 0; s < 3; ++s) {
            CHECK(back.v(0, s) == Catch::Approx(nuis.v(0, s)).margin(1e-12));
            CHECK(back.w_star(s) == nuis.w_star(s));
        }
    }
}

TEST_CASE("command line interface") {
    auto mdp = random_discounted_mdp(11, 3, 2, 0.9);
    auto pi_b = random_policy(12, 3, 2);
    TempFile mdp_file("cli_mdp.json");
    TempFile policy_file("cli_policy.json");
    TempFile behavior_file("cli_behavior.json");
    write_text_file(mdp_file.path, mdp_to_json(mdp).dump());
    write_text_file(behavior_file.path, policy_to_json(pi_b).dump());
    write_text_file(policy_file.path, json{{"behavior", policy_to_json(pi_b)},
                                           {"natural", {{"type", "tilting"}, {"u", {1.0, 2.0}}}}}
                                          .dump());

    SECTION("simulate then estimate, deterministically") {
        TempFile data_file("cli_data.jsonl");
        TempFile out1("cli_est1.json");
        TempFile out2("cli_est2.json");
        TempFile manifest1("cli_data.jsonl.manifest.json");
        TempFile manifest2("cli_est1.json.manifest.json");
        TempFile manifest3("cli_est2.json.manifest.json");
        REQUIRE(run_cli("simulate --mdp " + mdp_file.path + " --behavior " + behavior_file.path +
                        " --n 500 --seed 9 --output " + data_file.path) == 0);
        REQUIRE(run_cli("estimate --data " + data_file.path + " --policy " + policy_file.path +
                        " --estimator TI2 --mdp " + mdp_file.path + " --K 2 --seed 7 --output " +
                        out1.path) == 0);
        REQUIRE(run_cli("estimate --data " + data_file.path + " --policy " + policy_file.path +
                        " --estimator TI2 --mdp " + mdp_file.path + " --K 2 --seed 7 --output " +
                        out2.path) == 0);
        CHECK(read_text_file(out1.path) == read_text_file(out2.path));
        json report = json::parse(read_text_file(out1.path));
        CHECK(report.at("estimator") == "TI2");
        CHECK(report.at("K") == 2);
        json manifest = json::parse(read_text_file(manifest2.path));
        CHECK(manifest.at("subcommand") == "estimate");
        CHECK(manifest.at("inputs").size() == 3);
    }
    SECTION("bounds output includes the bound set") {
        TempFile out("cli_bounds.json");
        TempFile manifest("cli_bounds.json.manifest.json");
        REQUIRE(run_cli("bounds --mdp " + mdp_file.path + " --policy " + policy_file.path +
                        " --output " + out.path) == 0);
        json bounds = json::parse(read_text_file(out.path));
        CHECK(bounds.contains("TI2"));
        CHECK(bounds.contains("PR"));
        CHECK(bounds.at("TI2").at("value").get<double>() >=
              bounds.at("PR").at("value").get<double>() - 1e-12);
    }
    SECTION("bad inputs exit with the configuration code") {
        CHECK(run_cli("estimate --data missing.jsonl --policy " + policy_file.path +
                      " --estimator TI2") == 1);
        CHECK(run_cli("bogus-subcommand") == 1);
        CHECK(run_cli("simulate --mdp " + mdp_file.path) == 1);  // missing required flags
    }
    SECTION("selftest passes") { CHECK(run_cli("selftest") == 0); }
}

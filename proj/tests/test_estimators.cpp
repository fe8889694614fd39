#include <catch2/catch_amalgamated.hpp>

#include "nsp_ope/bounds.hpp"
#include "nsp_ope/nmdp.hpp"
#include "nsp_ope/random_instances.hpp"
#include "nsp_ope/simulate.hpp"
#include "oracles.hpp"

using namespace nspope;

namespace {

/// Mixture perturbation of a behavior policy toward a fixed direction.
StochasticPolicy perturb_policy(const StochasticPolicy& pi, const StochasticPolicy& direction,
                                real_t eps) {
    auto probs = pi.raw();
    for (std::size_t t = 0; t < probs.size(); ++t)
        for (std::size_t i = 0; i < probs[t].size(); ++i) {
            int s = static_cast<int>(i) / pi.n_actions();
            int a = static_cast<int>(i) % pi.n_actions();
            probs[t][i] = (1.0 - eps) * probs[t][i] +
                          eps * direction.prob(static_cast<int>(t), s, a);
        }
    return StochasticPolicy(pi.n_states(), pi.n_actions(), std::move(probs));
}

real_t loglog_slope(const std::vector<real_t>& eps, const std::vector<real_t>& bias) {
    // least-squares slope of log|bias| on log(eps)
    real_t mx = 0, my = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        mx += std::log(eps[i]) / eps.size();
        my += std::log(std::abs(bias[i])) / eps.size();
    }
    real_t num = 0, den = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        num += (std::log(eps[i]) - mx) * (std::log(std::abs(bias[i])) - my);
        den += (std::log(eps[i]) - mx) * (std::log(eps[i]) - mx);
    }
    return num / den;
}

}  // namespace

TEST_CASE("crossfit mechanics") {
    std::vector<real_t> samples(7, 0.0);
    SECTION("fold sizes stay within one of n/K") {
        auto part = FoldPartition::random(7, 3, 5);
        std::vector<std::size_t> sizes{part.fold_size(0), part.fold_size(1), part.fold_size(2)};
        std::sort(sizes.begin(), sizes.end());
        CHECK(sizes == std::vector<std::size_t>{2, 2, 3});
        auto contiguous = FoldPartition::contiguous(7, 3);
        for (int f = 0; f < 3; ++f) {
            auto size = contiguous.fold_size(f);
            CHECK(size >= 2);
            CHECK(size <= 3);
        }
    }
    SECTION("a constant score ignores the nuisances and the fold count") {
        std::function<int(const std::vector<real_t>&, Diagnostics&)> trainer =
            [](const std::vector<real_t>&, Diagnostics&) { return 0; };
        std::function<real_t(const real_t&, const int&)> phi = [](const real_t&, const int&) {
            return 4.25;
        };
        for (int k : {2, 3, 7}) {
            auto report = crossfit<real_t, int>("const", samples,
                                                FoldPartition::random(7, k, 9), 1, trainer, phi);
            CHECK(report.estimate == Catch::Approx(4.25));
            CHECK(report.se_hat == 0.0);
        }
    }
    SECTION("fold-independent nuisances make the estimate K-invariant") {
        auto mdp = random_finite_mdp(1, 2, 2, 2);
        auto pi_b = random_policy(2, 2, 2);
        auto spec = NaturalPolicySpec::tilting({1.0, 1.7});
        auto data = simulate_finite(mdp, pi_b, 100, 3);
        EstimatorOptions opt;
        opt.trainer.oracle_mdp = &mdp;
        opt.trainer.oracle_behavior = &pi_b;
        auto k2 = estimate_TI1(data, spec, 2, 11, opt);
        auto k5 = estimate_TI1(data, spec, 5, 11, opt);
        CHECK(k2.estimate == Catch::Approx(k5.estimate).margin(1e-12));
    }
    SECTION("K larger than n is rejected") {
        CHECK_THROWS_AS(FoldPartition::random(3, 5, 1), validation_error);
        CHECK_THROWS_AS(FoldPartition::random(10, 1, 1), validation_error);
    }
}

TEST_CASE("TI1") {
    auto mdp = random_finite_mdp(11, 3, 2, 2);
    auto pi_b = random_policy(12, 3, 2);
    EstimatorOptions opt;
    opt.trainer.oracle_mdp = &mdp;
    opt.trainer.oracle_behavior = &pi_b;

    SECTION("constant weights telescope to the sample mean return") {
        auto spec = NaturalPolicySpec::tilting({2.0, 2.0});
        auto data = simulate_finite(mdp, pi_b, 500, 13);
        auto report = estimate_TI1(data, spec, 2, 14, opt);
        real_t mean_return = 0.0;
        for (const auto& traj : data.trajectories)
            for (real_t r : traj.rewards) mean_return += r / data.trajectories.size();
        CHECK(report.estimate == Catch::Approx(mean_return).margin(1e-12));
    }
    SECTION("oracle-nuisance score integrates exactly to J") {
        auto spec = NaturalPolicySpec::tilting({1.0, 2.1});
        auto pi_e = make_tilting(pi_b, spec);
        real_t j = exact_value_finite(mdp, pi_e);
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        auto [mean_phi, ignored] = trajectory_moments(mdp, pi_b, [&](const Trajectory& traj) {
            return phi_trajectory(traj, oracle, Estimand::TI1);
        });
        CHECK(mean_phi == Catch::Approx(j).margin(1e-12));
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::TI1) ==
              Catch::Approx(j).margin(1e-12));
    }
    SECTION("H = 1 reduces to the bandit score") {
        auto bandit = random_finite_mdp(15, 3, 2, 1);
        auto spec = NaturalPolicySpec::tilting({1.0, 2.0});
        NuisanceSet oracle = oracle_nuisances(bandit, pi_b, spec);
        auto data = simulate_finite(bandit, pi_b, 50, 16);
        for (const auto& traj : data.trajectories) {
            real_t phi = phi_trajectory(traj, oracle, Estimand::TI1);
            int s = traj.states[0], a = traj.actions[0];
            real_t expected = oracle.eta(0, s, a) * (traj.rewards[0] - oracle.v(0, s)) +
                              oracle.v(0, s);
            CHECK(phi == Catch::Approx(expected).margin(1e-12));
        }
    }
}

TEST_CASE("MO1") {
    auto mdp = random_finite_mdp(21, 3, 2, 2);
    auto pi_b = random_policy(22, 3, 2);
    EstimatorOptions opt;
    opt.trainer.oracle_mdp = &mdp;
    opt.trainer.oracle_behavior = &pi_b;

    SECTION("identity map telescopes to the sample mean return") {
        auto spec = NaturalPolicySpec::identity_modified(3, 2);
        auto data = simulate_finite(mdp, pi_b, 400, 23);
        auto report = estimate_MO1(data, spec, 2, 24, opt);
        real_t mean_return = 0.0;
        for (const auto& traj : data.trajectories)
            for (real_t r : traj.rewards) mean_return += r / data.trajectories.size();
        CHECK(report.estimate == Catch::Approx(mean_return).margin(1e-12));
    }
    SECTION("oracle-nuisance score integrates exactly to J") {
        auto spec = NaturalPolicySpec::modified(random_tau(25, 3, 2));
        real_t j = exact_value_finite(mdp, make_modified(pi_b, spec));
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        auto [mean_phi, ignored] = trajectory_moments(mdp, pi_b, [&](const Trajectory& traj) {
            return phi_trajectory(traj, oracle, Estimand::MO1);
        });
        CHECK(mean_phi == Catch::Approx(j).margin(1e-12));
    }
    SECTION("H = 1 reduces to the bandit score") {
        auto bandit = random_finite_mdp(26, 3, 2, 1);
        auto spec = NaturalPolicySpec::modified(random_tau(27, 3, 2));
        NuisanceSet oracle = oracle_nuisances(bandit, pi_b, spec);
        auto data = simulate_finite(bandit, pi_b, 50, 28);
        for (const auto& traj : data.trajectories) {
            real_t phi = phi_trajectory(traj, oracle, Estimand::MO1);
            int s = traj.states[0], a = traj.actions[0];
            real_t expected = oracle.eta(0, s, a) * (traj.rewards[0] - oracle.q(0, s, a)) +
                              oracle.q_tau(0, s, a);
            CHECK(phi == Catch::Approx(expected).margin(1e-12));
        }
    }
}

TEST_CASE("stationary estimators integrate to J(gamma) at the oracle") {
    auto mdp = random_discounted_mdp(31, 3, 2, 0.9);
    auto pi_b = random_policy(32, 3, 2);

    SECTION("TI2 via transition enumeration") {
        auto spec = NaturalPolicySpec::tilting({1.0, 1.9});
        real_t j = exact_value_discounted(mdp, make_tilting(pi_b, spec));
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        real_t offset = stationary_offset(oracle, Estimand::TI2, mdp.gamma, mdp.initial_dist,
                                          nullptr);
        auto [mean_phi, ignored] = transition_moments(mdp, pi_b, [&](const TransitionTuple& t) {
            return phi_transition(t, oracle, Estimand::TI2, mdp.gamma);
        });
        CHECK(mean_phi + offset == Catch::Approx(j).margin(1e-12));
    }
    SECTION("MO2 via transition enumeration") {
        auto spec = NaturalPolicySpec::modified(random_tau(33, 3, 2));
        real_t j = exact_value_discounted(mdp, make_modified(pi_b, spec));
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        real_t offset = stationary_offset(oracle, Estimand::MO2, mdp.gamma, mdp.initial_dist,
                                          &pi_b);
        auto [mean_phi, ignored] = transition_moments(mdp, pi_b, [&](const TransitionTuple& t) {
            return phi_transition(t, oracle, Estimand::MO2, mdp.gamma);
        });
        CHECK(mean_phi + offset == Catch::Approx(j).margin(1e-12));
    }
    SECTION("identity tau makes MO2 the pre-specified doubly robust score") {
        auto spec = NaturalPolicySpec::identity_modified(3, 2);
        real_t j = exact_value_discounted(mdp, pi_b);
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::MO2) ==
              Catch::Approx(j).margin(1e-12));
    }
    SECTION("one-state process returns the mean reward for any valid nuisances") {
        TabularDecisionProcess tiny;
        tiny.n_states = 1;
        tiny.n_actions = 1;
        tiny.flavor = Flavor::stationary_discounted;
        tiny.gamma = 0.9;
        tiny.r_max = 1.0;
        tiny.transition = {{1.0}};
        tiny.rewards = {{RewardDist{{0.4, 1.0}}}};
        tiny.initial_dist = {1.0};
        auto uni = StochasticPolicy::uniform(1, 1);
        auto data = simulate_stationary(tiny, uni, 64, 0, 1);
        EstimatorOptions opt;
        opt.trainer.oracle_mdp = &tiny;
        opt.trainer.oracle_behavior = &uni;
        auto spec = NaturalPolicySpec::tilting({1.0});
        auto report = estimate_TI2(data, spec, tiny.gamma, tiny.initial_dist, 2, 3, opt);
        CHECK(report.estimate == Catch::Approx(0.4).margin(1e-12));
    }
}

TEST_CASE("MIS and DM respond to corruption as first-order estimators") {
    auto mdp = random_discounted_mdp(41, 3, 2, 0.9);
    auto pi_b = random_policy(42, 3, 2);
    auto spec = NaturalPolicySpec::tilting({1.0, 1.8});
    real_t j = exact_value_discounted(mdp, make_tilting(pi_b, spec));
    NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);

    SECTION("MIS is exactly unbiased at the oracle ratios") {
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::MIS) ==
              Catch::Approx(j).margin(1e-12));
    }
    SECTION("a +3 shift in w* biases MIS by 3 E[eta r]") {
        auto shifted_w = oracle.w_star_raw();
        for (auto& x : shifted_w) x += 3.0;
        NuisanceSet shifted(spec, pi_b, oracle.q_raw()[0], shifted_w);
        real_t e_eta_r = 0.0;
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a)
                e_eta_r += mdp.p_b()[s] * pi_b.prob(0, s, a) * oracle.eta(0, s, a) *
                           mdp.mean_reward(0, s, a);
        real_t bias = exact_phi_expectation(mdp, pi_b, shifted, Estimand::MIS) - j;
        CHECK(bias == Catch::Approx(3.0 * e_eta_r).margin(1e-12));
        CHECK(std::abs(bias) > 1e-3);
    }
    SECTION("DM is exact at the oracle and biased by (1-gamma) * 3 under a q shift") {
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::DM) ==
              Catch::Approx(j).margin(1e-12));
        auto q_shift = oracle.q_raw();
        for (auto& x : q_shift[0]) x += 3.0;
        NuisanceSet shifted(spec, pi_b, q_shift[0], oracle.w_star_raw());
        real_t bias = exact_phi_expectation(mdp, pi_b, shifted, Estimand::DM) - j;
        CHECK(bias == Catch::Approx(3.0 * (1.0 - mdp.gamma)).margin(1e-12));
    }
}

TEST_CASE("partial and full double robustness, exact expectations") {
    SECTION("finite horizon") {
        auto mdp = random_finite_mdp(51, 3, 2, 3);
        auto pi_b = random_policy(52, 3, 2);
        auto tilt = NaturalPolicySpec::tilting({1.0, 2.0});
        auto modi = NaturalPolicySpec::modified(random_tau(53, 3, 2));
        real_t j_t = exact_value_finite(mdp, make_tilting(pi_b, tilt));
        real_t j_m = exact_value_finite(mdp, make_modified(pi_b, modi));
        NuisanceSet oracle_t = oracle_nuisances(mdp, pi_b, tilt);
        NuisanceSet oracle_m = oracle_nuisances(mdp, pi_b, modi);
        CorruptionSpec cw{CorruptionSpec::Target::w, 1.0, 0.7, 5};
        CorruptionSpec cq{CorruptionSpec::Target::q, 1.0, 0.7, 6};
        CorruptionSpec cb{CorruptionSpec::Target::pi_b, 0.0, 1.2, 7};

        // TI1 protected: pi_b oracle plus one corrupted nuisance
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cw), Estimand::TI1) ==
              Catch::Approx(j_t).margin(1e-10));
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cq), Estimand::TI1) ==
              Catch::Approx(j_t).margin(1e-10));
        // TI1 unprotected: corrupted behavior policy
        CHECK(std::abs(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cb), Estimand::TI1) -
                       j_t) > 1e-3);
        // MO1 fully robust: q oracle with both pi_b and w corrupted
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(corrupt(oracle_m, cb), cw),
                                    Estimand::MO1) == Catch::Approx(j_m).margin(1e-10));
        // MO1 other direction: q corrupted, (pi_b, w) oracle
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_m, cq), Estimand::MO1) ==
              Catch::Approx(j_m).margin(1e-10));
    }
    SECTION("stationary") {
        auto mdp = random_discounted_mdp(61, 3, 2, 0.9);
        auto pi_b = random_policy(62, 3, 2);
        auto tilt = NaturalPolicySpec::tilting({1.0, 1.7});
        auto modi = NaturalPolicySpec::modified(random_tau(63, 3, 2));
        real_t j_t = exact_value_discounted(mdp, make_tilting(pi_b, tilt));
        real_t j_m = exact_value_discounted(mdp, make_modified(pi_b, modi));
        NuisanceSet oracle_t = oracle_nuisances(mdp, pi_b, tilt);
        NuisanceSet oracle_m = oracle_nuisances(mdp, pi_b, modi);
        CorruptionSpec cw{CorruptionSpec::Target::w_star, 1.0, 0.7, 5};
        CorruptionSpec cq{CorruptionSpec::Target::q, 1.0, 0.7, 6};
        // the behavior-policy bias is second order, so the corruption is
        // chosen large enough to surface it on this instance
        CorruptionSpec cb{CorruptionSpec::Target::pi_b, 0.0, 2.5, 9};

        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cw), Estimand::TI2) ==
              Catch::Approx(j_t).margin(1e-10));
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cq), Estimand::TI2) ==
              Catch::Approx(j_t).margin(1e-10));
        CHECK(std::abs(exact_phi_expectation(mdp, pi_b, corrupt(oracle_t, cb), Estimand::TI2) -
                       j_t) > 1e-3);
        // MO2 fully robust in the q direction
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(corrupt(oracle_m, cb), cw),
                                    Estimand::MO2) == Catch::Approx(j_m).margin(1e-10));
        CHECK(exact_phi_expectation(mdp, pi_b, corrupt(oracle_m, cq), Estimand::MO2) ==
              Catch::Approx(j_m).margin(1e-10));
    }
    SECTION("V2 is doubly robust in (v, w*)") {
        auto mdp = random_discounted_mdp(71, 3, 2, 0.9);
        auto pi_b = random_policy(72, 3, 2);
        auto spec = NaturalPolicySpec::tilting({1.0, 2.0});
        auto pi_e = make_tilting(pi_b, spec);
        real_t j = exact_value_discounted(mdp, pi_e);
        auto ratios = compute_ratios(mdp, pi_b, pi_e);
        auto qv = exact_q_v_discounted(mdp, pi_e);
        std::mt19937_64 rng(73);
        auto junk_v = qv.v;
        for (auto& x : junk_v) x += 1.0 + normal01(rng);
        auto junk_w = ratios.w_star;
        for (auto& x : junk_w) x += 1.0 + normal01(rng);
        CHECK(exact_v2_expectation(mdp, pi_b, ratios.eta[0], qv.v, junk_w) ==
              Catch::Approx(j).margin(1e-10));
        CHECK(exact_v2_expectation(mdp, pi_b, ratios.eta[0], junk_v, ratios.w_star) ==
              Catch::Approx(j).margin(1e-10));
        CHECK(std::abs(exact_v2_expectation(mdp, pi_b, ratios.eta[0], junk_v, junk_w) - j) >
              1e-3);
    }
}

TEST_CASE("naive plug-in has first-order bias, TI1 second-order") {
    auto mdp = random_finite_mdp(81, 3, 2, 3);
    auto pi_b = random_policy(82, 3, 2);
    auto spec = NaturalPolicySpec::tilting({1.0, 2.2});
    real_t j = exact_value_finite(mdp, make_tilting(pi_b, spec));
    auto direction = random_policy(83, 3, 2);
    auto qv = exact_q_v_finite(mdp, make_tilting(pi_b, spec));
    auto ratios = compute_ratios(mdp, pi_b, make_tilting(pi_b, spec));

    SECTION("population scores coincide at the oracle") {
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, spec);
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::NAIVE) ==
              Catch::Approx(exact_phi_expectation(mdp, pi_b, oracle, Estimand::TI1))
                  .margin(1e-12));
    }
    SECTION("constant weights still integrate to the on-policy value") {
        auto flat = NaturalPolicySpec::tilting({1.0, 1.0});
        NuisanceSet oracle = oracle_nuisances(mdp, pi_b, flat);
        real_t j_b = exact_value_finite(mdp, pi_b);
        CHECK(exact_phi_expectation(mdp, pi_b, oracle, Estimand::NAIVE) ==
              Catch::Approx(j_b).margin(1e-12));
        auto [mean_phi, ignored] = trajectory_moments(mdp, pi_b, [&](const Trajectory& traj) {
            return phi_trajectory(traj, oracle, Estimand::NAIVE);
        });
        CHECK(mean_phi == Catch::Approx(j_b).margin(1e-12));
    }
    SECTION("log-log bias slopes separate the two scores") {
        std::vector<real_t> eps{0.02, 0.04, 0.08};
        std::vector<real_t> bias_ti1, bias_naive;
        for (real_t e : eps) {
            auto perturbed = perturb_policy(pi_b, direction, e);
            NuisanceSet nuis(spec, perturbed, qv.q, ratios.w);  // oracle w and q
            bias_ti1.push_back(exact_phi_expectation(mdp, pi_b, nuis, Estimand::TI1) - j);
            bias_naive.push_back(exact_phi_expectation(mdp, pi_b, nuis, Estimand::NAIVE) - j);
        }
        CHECK(loglog_slope(eps, bias_ti1) >= 1.7);
        CHECK(loglog_slope(eps, bias_naive) <= 1.3);
    }
}

TEST_CASE("V2 estimator") {
    auto mdp = random_discounted_mdp(91, 3, 2, 0.9);
    auto pi_b = random_policy(92, 3, 2);
    auto spec = NaturalPolicySpec::tilting({1.0, 1.6});
    auto pi_e = make_tilting(pi_b, spec);
    real_t j = exact_value_discounted(mdp, pi_e);
    auto ratios = compute_ratios(mdp, pi_b, pi_e);
    auto qv = exact_q_v_discounted(mdp, pi_e);
    auto data = simulate_transitions_iid(mdp, pi_b, 20000, 93);
    auto report = estimate_V2(data, mdp.gamma, mdp.initial_dist, ratios.eta[0], qv.v,
                              ratios.w_star, 2, 94);
    CHECK(std::abs(report.estimate - j) <= 4.0 * report.se_hat);
}

TEST_CASE("NMDP estimator through the history embedding") {
    auto mdp = random_finite_mdp(101, 2, 2, 3);
    auto pi_b = random_policy(102, 2, 2);
    auto spec = NaturalPolicySpec::tilting({1.0, 2.0});
    real_t j = exact_value_finite(mdp, make_tilting(pi_b, spec));
    auto data = simulate_finite(mdp, pi_b, 3000, 103);
    EstimatorOptions opt;
    opt.trainer.oracle_mdp = &mdp;  // replaced by the embedded process internally
    opt.trainer.oracle_behavior = &pi_b;
    auto report = estimate_nmdp(mdp, pi_b, data, spec, Estimand::TI1, 2, 104, opt);
    CHECK(std::abs(report.estimate - j) <= 4.0 * report.se_hat);

    // the embedded oracle score also integrates exactly to J
    NmdpEmbedding emb(mdp, pi_b, spec);
    NuisanceSet oracle = oracle_nuisances(emb.embedded(), emb.behavior(), emb.spec());
    auto [mean_phi, ignored] =
        trajectory_moments(emb.embedded(), emb.behavior(), [&](const Trajectory& traj) {
            return phi_trajectory(traj, oracle, Estimand::TI1);
        });
    CHECK(mean_phi == Catch::Approx(j).margin(1e-10));
}

TEST_CASE("reports are deterministic and serializable") {
    auto mdp = random_finite_mdp(111, 2, 2, 2);
    auto pi_b = random_policy(112, 2, 2);
    auto spec = NaturalPolicySpec::tilting({1.0, 1.5});
    auto data = simulate_finite(mdp, pi_b, 200, 113);
    EstimatorOptions opt;
    auto a = estimate_TI1(data, spec, 2, 7, opt);
    auto b = estimate_TI1(data, spec, 2, 7, opt);
    CHECK(a.estimate == b.estimate);
    CHECK(a.se_hat == b.se_hat);
    REQUIRE(a.per_fold.size() == b.per_fold.size());
    for (std::size_t i = 0; i < a.per_fold.size(); ++i)
        CHECK(a.per_fold[i].estimate == b.per_fold[i].estimate);
    // the report invariant: estimate is the fold-size weighted mean
    real_t weighted = 0.0;
    for (const auto& f : a.per_fold) weighted += f.size * f.estimate;
    CHECK(a.estimate == Catch::Approx(weighted / a.n).margin(1e-12));
}

#pragma once

#include <cmath>
#include <iostream>
#include <string>

#include "nsp_ope/bounds.hpp"
#include "nsp_ope/nmdp.hpp"
#include "nsp_ope/random_instances.hpp"

/// \file selftest.hpp
/// Enumeration-oracle invariant suite: exact identities that must hold on
/// every instance, checked on seeded random processes. The CLI exposes this
/// as `selftest`.

namespace nspope {

namespace selftest_detail {

struct Check {
    std::ostream& out;
    bool all_ok = true;

    void operator()(const std::string& name, bool ok, real_t err = 0.0) {
        out << (ok ? "pass" : "FAIL") << "  " << name;
        if (err != 0.0) out << "  (err=" << err << ")";
        out << "\n";
        all_ok = all_ok && ok;
    }
};

}  // namespace selftest_detail

/// Runs the invariant suite; prints one line per check; returns overall pass.
inline bool run_selftest(std::ostream& out) {
    selftest_detail::Check check{out};

    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        auto mdp = random_finite_mdp(seed, 3, 2, 3);
        auto pi_b = random_policy(seed + 100, 3, 2);
        auto tilt = NaturalPolicySpec::tilting(random_tilt_weights(seed + 200, 2));
        auto modi = NaturalPolicySpec::modified(random_tau(seed + 300, 3, 2));

        // exact value equals brute-force enumeration of prob x return
        for (const auto* spec : {&tilt, &modi}) {
            auto pi_e = make_evaluation_policy(pi_b, *spec);
            real_t j_dp = exact_value_finite(mdp, pi_e);
            auto [j_enum, ignored] = trajectory_moments(mdp, pi_e, [](const Trajectory& t) {
                real_t r = 0.0;
                for (real_t x : t.rewards) r += x;
                return r;
            });
            check("finite value: DP equals trajectory enumeration (seed " + std::to_string(seed) +
                      ")",
                  std::abs(j_dp - j_enum) < 1e-10, j_dp - j_enum);

            // EIF has mean zero and variance equal to the closed-form bound
            Estimand est = spec->kind == NaturalPolicySpec::Kind::tilting ? Estimand::TI1
                                                                          : Estimand::MO1;
            NuisanceSet oracle = oracle_nuisances(mdp, pi_b, *spec);
            auto [mean_eif, var_eif] = trajectory_moments(
                mdp, pi_b,
                [&](const Trajectory& t) { return eif_eval(t, oracle, est, j_dp); });
            check("finite EIF mean zero (" + estimand_name(est) + ")", std::abs(mean_eif) < 1e-10,
                  mean_eif);
            EfficiencyBounds bound = bound_finite(mdp, pi_b, *spec, est);
            check("finite bound equals EIF variance (" + estimand_name(est) + ")",
                  std::abs(bound.value - var_eif) < 1e-10, bound.value - var_eif);
            EfficiencyBounds pr = bound_finite(mdp, pi_b, *spec, Estimand::PR);
            check("bound-comparison identity (" + estimand_name(est) + ")",
                  std::abs(bound.value - pr.value - bound.inflation_vs_prespecified) < 1e-10);
            check("polynomial cap (" + estimand_name(est) + ")",
                  bound.value <= *bound.upper_bound_cap + 1e-12);
        }

        // NMDP bound dominates the TMDP bound on Markov instances
        EfficiencyBounds nmdp = bound_nmdp(mdp, pi_b, tilt, 3, Estimand::TI1);
        EfficiencyBounds tmdp = bound_finite(mdp, pi_b, tilt, Estimand::TI1);
        check("NMDP bound >= TMDP bound (seed " + std::to_string(seed) + ")",
              nmdp.value >= tmdp.value - 1e-10, nmdp.value - tmdp.value);
    }

    for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
        auto mdp = random_discounted_mdp(seed, 3, 2, 0.9);
        auto pi_b = random_policy(seed + 100, 3, 2);
        auto tilt = NaturalPolicySpec::tilting(random_tilt_weights(seed + 200, 2));
        auto modi = NaturalPolicySpec::modified(random_tau(seed + 300, 3, 2));

        // dual value representations: (1-gamma) E_{p_e1}[v] vs the
        // ratio-weighted reward mean of the sampling distribution
        auto pi_e = make_tilting(pi_b, tilt);
        real_t j_v = exact_value_discounted(mdp, pi_e);
        RatioSet ratios = compute_ratios(mdp, pi_b, pi_e);
        real_t j_ratio = 0.0;
        const auto& pb = mdp.p_b();
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a)
                j_ratio += pb[s] * pi_b.prob(0, s, a) * ratios.mu_star[mdp.sa(s, a)] *
                           mdp.mean_reward(0, s, a);
        check("discounted value: v-form equals ratio-form (seed " + std::to_string(seed) + ")",
              std::abs(j_v - j_ratio) < 1e-10, j_v - j_ratio);

        for (const auto* spec : {&tilt, &modi}) {
            Estimand est = spec->kind == NaturalPolicySpec::Kind::tilting ? Estimand::TI2
                                                                          : Estimand::MO2;
            NuisanceSet oracle = oracle_nuisances(mdp, pi_b, *spec);
            auto [mean_eif, var_eif] = transition_moments(
                mdp, pi_b,
                [&](const TransitionTuple& t) { return eif_eval(t, oracle, est, mdp.gamma); });
            check("stationary EIF mean zero (" + estimand_name(est) + ")",
                  std::abs(mean_eif) < 1e-10, mean_eif);
            EfficiencyBounds bound = bound_discounted(mdp, pi_b, *spec, est);
            check("stationary bound equals EIF variance (" + estimand_name(est) + ")",
                  std::abs(bound.value - var_eif) < 1e-10, bound.value - var_eif);
            EfficiencyBounds pr = bound_discounted(mdp, pi_b, *spec, Estimand::PR);
            check("stationary bound ordering (" + estimand_name(est) + " >= PR)",
                  bound.value >= pr.value - 1e-12);

            // exact phi expectation with oracle nuisances recovers J(gamma)
            auto eval_pi = make_evaluation_policy(pi_b, *spec);
            real_t j = exact_value_discounted(mdp, eval_pi);
            real_t e_phi = exact_phi_expectation(mdp, pi_b, oracle, est);
            check("oracle phi expectation equals J (" + estimand_name(est) + ")",
                  std::abs(e_phi - j) < 1e-10, e_phi - j);
        }
    }
    return check.all_ok;
}

}  // namespace nspope

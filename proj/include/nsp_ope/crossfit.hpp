#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "nsp_ope/common.hpp"

/// \file crossfit.hpp
/// K-fold cross-fitting: nuisances are trained on each fold's complement and
/// the influence-style term is averaged over the fold, removing
/// own-observation bias.

namespace nspope {

enum class FoldScheme {
    random,      ///< seeded random partition; for i.i.d. samples
    contiguous,  ///< contiguous blocks; preserves mixing for single-chain data
};

/// A K-fold partition of {0,...,n-1} with fold sizes within 1 of n/K.
struct FoldPartition {
    int k = 2;
    std::vector<int> assignment;  ///< sample index -> fold id

    static FoldPartition random(std::size_t n, int k, std::uint64_t seed) {
        check(n, k);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(seed);
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<real_t>(i));
            if (j >= i) j = i - 1;
            std::swap(perm[i - 1], perm[j]);
        }
        FoldPartition part;
        part.k = k;
        part.assignment.resize(n);
        for (std::size_t i = 0; i < n; ++i) part.assignment[perm[i]] = static_cast<int>(i % k);
        return part;
    }

    static FoldPartition contiguous(std::size_t n, int k) {
        check(n, k);
        FoldPartition part;
        part.k = k;
        part.assignment.resize(n);
        for (int f = 0; f < k; ++f) {
            std::size_t lo = n * static_cast<std::size_t>(f) / k;
            std::size_t hi = n * static_cast<std::size_t>(f + 1) / k;
            for (std::size_t i = lo; i < hi; ++i) part.assignment[i] = f;
        }
        return part;
    }

    static FoldPartition make(FoldScheme scheme, std::size_t n, int k, std::uint64_t seed) {
        return scheme == FoldScheme::random ? random(n, k, seed) : contiguous(n, k);
    }

    std::size_t fold_size(int fold) const {
        std::size_t c = 0;
        for (int f : assignment)
            if (f == fold) ++c;
        return c;
    }

private:
    static void check(std::size_t n, int k) {
        if (k < 2) throw validation_error("fold partition: K must be at least 2");
        if (static_cast<std::size_t>(k) > n)
            throw validation_error("fold partition: K exceeds the sample count");
    }
};

struct FoldResult {
    int fold = 0;
    std::size_t size = 0;
    real_t estimate = 0.0;
};

/// Point estimate with per-fold values, the influence-function-based
/// standard error (sample SD of the cross-fitted phi values over sqrt(n)),
/// and diagnostics accumulated across folds.
struct EstimateReport {
    std::string estimator;
    real_t estimate = 0.0;
    real_t se_hat = 0.0;
    std::size_t n = 0;
    int folds = 1;
    std::uint64_t seed = 0;
    std::vector<FoldResult> per_fold;
    Diagnostics diagnostics;
};

/// Generic cross-fitting loop. `trainer` builds nuisances from the fold's
/// complement; `phi` evaluates one sample against them; `fold_offset`, when
/// given, is a per-fold constant added to every phi value (used for the
/// initial-distribution terms of the stationary estimators). The final
/// estimate is the fold-size weighted average (1/n) sum_k |I_k| J_k.
template <class Sample, class Nuis>
EstimateReport crossfit(const std::string& name, const std::vector<Sample>& samples,
                        const FoldPartition& part, std::uint64_t seed,
                        const std::function<Nuis(const std::vector<Sample>&, Diagnostics&)>& trainer,
                        const std::function<real_t(const Sample&, const Nuis&)>& phi,
                        const std::function<real_t(const Nuis&)>& fold_offset = nullptr) {
    const std::size_t n = samples.size();
    if (part.assignment.size() != n)
        throw validation_error("crossfit: partition does not match the sample count");
    EstimateReport report;
    report.estimator = name;
    report.n = n;
    report.folds = part.k;
    report.seed = seed;
    std::vector<real_t> phi_values;
    phi_values.reserve(n);
    real_t weighted = 0.0;
    for (int fold = 0; fold < part.k; ++fold) {
        std::vector<Sample> training;
        training.reserve(n - n / part.k);
        for (std::size_t i = 0; i < n; ++i)
            if (part.assignment[i] != fold) training.push_back(samples[i]);
        Nuis nuis = trainer(training, report.diagnostics);
        real_t offset = fold_offset ? fold_offset(nuis) : 0.0;
        real_t sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (part.assignment[i] != fold) continue;
            real_t value = phi(samples[i], nuis) + offset;
            phi_values.push_back(value);
            sum += value;
            ++count;
        }
        real_t fold_estimate = count ? sum / static_cast<real_t>(count) : 0.0;
        report.per_fold.push_back({fold, count, fold_estimate});
        weighted += static_cast<real_t>(count) * fold_estimate;
    }
    report.estimate = weighted / static_cast<real_t>(n);
    report.se_hat = std::sqrt(sample_variance(phi_values) / static_cast<real_t>(n));
    return report;
}

}  // namespace nspope

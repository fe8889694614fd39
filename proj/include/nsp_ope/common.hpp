#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

/// \file common.hpp
/// Shared scalar types, validation tolerances, error types, diagnostics
/// counters, and deterministic random-number helpers used across the library.

namespace nspope {

/// Floating-point precision used throughout.
using real_t = double;

/// Tolerance for validating probability inputs (row sums, distributions).
inline constexpr real_t kProbTol = 1e-12;

/// Tolerance for linear-solver residuals (Bellman fixed points, moment systems).
inline constexpr real_t kSolveTol = 1e-10;

/// Tolerance for the empirical moment systems fitted from data.
inline constexpr real_t kMomentTol = 1e-8;

/// Raised when an input (model, policy, config) fails validation.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a computation cannot proceed (singular system, no overlap).
class computation_error : public std::runtime_error {
public:
    explicit computation_error(const std::string& what) : std::runtime_error(what) {}
};

/// Named counters surfaced alongside estimates (zeroed ratios, unseen states,
/// condition estimates). Values are summed when reports are merged.
struct Diagnostics {
    std::map<std::string, real_t> counters;

    void add(const std::string& key, real_t value = 1.0) { counters[key] += value; }
    void set_max(const std::string& key, real_t value) {
        auto it = counters.find(key);
        if (it == counters.end() || it->second < value) counters[key] = value;
    }
    void merge(const Diagnostics& other) {
        for (const auto& [k, v] : other.counters) counters[k] += v;
    }
    real_t get(const std::string& key) const {
        auto it = counters.find(key);
        return it == counters.end() ? 0.0 : it->second;
    }
};

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All sampling goes through mt19937_64 plus the helpers below, so a dataset is
// a pure function of (inputs, seed) independent of the standard library's
// distribution implementations.
// ---------------------------------------------------------------------------

/// SplitMix64 step; used to derive independent stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a master seed and up to three stream indices.
/// Each index is diffused through splitmix64 before mixing, so nearby master
/// seeds or indices never share streams. The scheme is documented so
/// experiment runs can be reproduced externally:
/// x0 = splitmix64(master); x_{k+1} = splitmix64(x_k + splitmix64(g_k + 1)).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t g0,
                                 std::uint64_t g1 = 0, std::uint64_t g2 = 0) {
    std::uint64_t x = splitmix64(master);
    x = splitmix64(x + splitmix64(g0 + 1));
    x = splitmix64(x + splitmix64(g1 + 1));
    return splitmix64(x + splitmix64(g2 + 1));
}

/// Uniform double in [0,1) with 53 random bits, identical on every platform.
inline real_t uniform01(std::mt19937_64& rng) {
    return static_cast<real_t>(rng() >> 11) * 0x1.0p-53;
}

/// Samples an index from an unnormalized nonnegative weight vector by CDF walk.
/// The vector must have positive total mass.
inline int sample_index(std::mt19937_64& rng, std::span<const real_t> weights) {
    real_t total = 0.0;
    for (real_t w : weights) total += w;
    real_t u = uniform01(rng) * total;
    real_t acc = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = static_cast<int>(i);
        if (u < acc) return last;
    }
    if (last < 0) throw computation_error("sample_index: weight vector has no mass");
    return last;
}

/// Standard normal draw via Box-Muller (two 53-bit uniforms), deterministic
/// across standard-library implementations.
inline real_t normal01(std::mt19937_64& rng) {
    real_t u1 = uniform01(rng);
    real_t u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Sample mean.
inline real_t mean_of(std::span<const real_t> xs) {
    real_t s = 0.0;
    for (real_t x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<real_t>(xs.size());
}

/// Unbiased sample variance (n-1 denominator); zero for n < 2.
inline real_t sample_variance(std::span<const real_t> xs) {
    if (xs.size() < 2) return 0.0;
    real_t m = mean_of(xs);
    real_t s = 0.0;
    for (real_t x : xs) s += (x - m) * (x - m);
    return s / static_cast<real_t>(xs.size() - 1);
}

}  // namespace nspope

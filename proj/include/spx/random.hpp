#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace spx {

/// SplitMix64 finalizer. Used for seed expansion and stream derivation.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Counter-based stream key: a pure function of (seed, index), so replicate
/// i always sees the same stream no matter which worker runs it.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// xoshiro256** engine with the sampling helpers the library needs.
/// Satisfies UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal() noexcept;
    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
    double gamma(double shape) noexcept;
    double beta(double a, double b) noexcept;
    /// logit of a Beta(a, b) variate, formed from the two gamma variates so
    /// that extreme draws never saturate to 0 or 1.
    double logit_beta(double a, double b) noexcept;
    /// Cauchy(0, scale) truncated to (0, inf).
    double half_cauchy(double scale) noexcept;
    double cauchy(double scale) noexcept;
    int binomial(int n, double p) noexcept;
    /// Uniform index in [0, n).
    std::uint64_t index(std::uint64_t n) noexcept;

private:
    std::array<std::uint64_t, 4> s_;
};

}  // namespace spx

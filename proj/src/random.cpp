#include "spx/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/random/binomial_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace spx {

namespace {

std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix64(mix64(seed) ^ mix64(index + 0xD1B54A32D192ED03ULL));
}

Rng::Rng(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& word : s_) {
        word = mix64(z);
        z += 0x9E3779B97F4A7C15ULL;
    }
}

Rng::result_type Rng::operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() noexcept {
    // 53 random bits, shifted by half an ulp so 0 is never produced.
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept {
    boost::random::normal_distribution<double> dist;
    return dist(*this);
}

double Rng::gamma(double shape) noexcept {
    boost::random::gamma_distribution<double> dist(shape);
    return dist(*this);
}

double Rng::beta(double a, double b) noexcept {
    const double ga = gamma(a);
    const double gb = gamma(b);
    return ga / (ga + gb);
}

double Rng::logit_beta(double a, double b) noexcept {
    constexpr double tiny = std::numeric_limits<double>::min();
    const double ga = std::max(gamma(a), tiny);
    const double gb = std::max(gamma(b), tiny);
    return std::log(ga) - std::log(gb);
}

double Rng::half_cauchy(double scale) noexcept {
    return scale * std::tan(0.5 * std::numbers::pi * uniform());
}

double Rng::cauchy(double scale) noexcept {
    return scale * std::tan(std::numbers::pi * (uniform() - 0.5));
}

int Rng::binomial(int n, double p) noexcept {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    boost::random::binomial_distribution<int, double> dist(n, p);
    return dist(*this);
}

std::uint64_t Rng::index(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; the bias is below 2^-64 * n.
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>((*this)()) * n) >> 64);
}

}  // namespace spx

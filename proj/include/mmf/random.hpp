#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mmf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for stream `stream` derived from a base seed (e.g. chain id, replicate id).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    double u;
    do {
        u = uniform01(rng);
    } while (u <= 0.0);
    return u;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(rng);
}

/// Gamma(shape, rate) draw.
inline double gamma_rate(Rng& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double beta(Rng& rng, double a, double b) {
    const double x = gamma_rate(rng, a, 1.0);
    const double y = gamma_rate(rng, b, 1.0);
    return x / (x + y);
}

inline std::int64_t poisson(Rng& rng, double rate) {
    if (!(rate > 0.0)) return 0;
    return std::poisson_distribution<std::int64_t>(rate)(rng);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

/// Multinomial(total, probs) by sequential conditional binomials; probs need
/// not be normalized.
inline std::vector<std::int64_t> multinomial(Rng& rng, std::int64_t total, std::span<const double> probs) {
    std::vector<std::int64_t> out(probs.size(), 0);
    double remaining_mass = 0.0;
    for (double p : probs) remaining_mass += p;
    std::int64_t remaining = total;
    for (std::size_t j = 0; j < probs.size() && remaining > 0; ++j) {
        if (j + 1 == probs.size()) {
            out[j] = remaining;
            break;
        }
        double frac = remaining_mass > 0.0 ? probs[j] / remaining_mass : 0.0;
        if (remaining_mass - probs[j] <= remaining_mass * 1e-14) frac = 1.0;
        frac = frac < 0.0 ? 0.0 : (frac > 1.0 ? 1.0 : frac);
        const auto draw = std::binomial_distribution<std::int64_t>(remaining, frac)(rng);
        out[j] = draw;
        remaining -= draw;
        remaining_mass -= probs[j];
    }
    return out;
}

}  // namespace mmf

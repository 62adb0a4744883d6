#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include "abc/tensor.hpp"

namespace abc {

/// Derives an independent stream seed from a master seed and a role tag, so
/// that e.g. parameter init and pair sampling never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view role) {
    // FNV-1a over the tag, then a splitmix64 finalizer.
    std::uint64_t h = 14695981039346656037ull;
    for (char c : role) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ull;
    }
    std::uint64_t z = master + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seeded RNG used everywhere randomness is needed. The distributions are
/// spelled out here (rather than taken from <random>) because the standard
/// leaves their algorithms implementation-defined; deriving them from raw
/// mt19937_64 output keeps runs reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random mantissa bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    /// Box-Muller; the second value of each pair is cached.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double u2 = unit();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return mean + stddev * mag * std::cos(2.0 * kPi * u2);
    }

    /// Uniform integer in [0, n) by rejection, no modulo bias.
    std::int64_t index(std::int64_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return static_cast<std::int64_t>(v % bound);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    static constexpr double kPi = 3.14159265358979323846;

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Fan-based uniform (Xavier) initialization: U(-a, a), a = sqrt(6/(fan_in+fan_out)).
template <typename T>
void xavier_fill(Tensor<T>& t, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
void gaussian_fill(Tensor<T>& t, double mean, double stddev, Rng& rng) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.gaussian(mean, stddev));
}

}  // namespace abc

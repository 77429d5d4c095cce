#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hsfs {

/// Deterministic random source. The standard <random> distributions are
/// implementation-defined, so every draw here is spelled out explicitly:
/// the same seed yields the same stream on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix(seed)) {}

    // uniform double in [0, 1) with 53 random bits
    double u01() {
        const std::uint64_t a = gen_() >> 5;  // 27 bits
        const std::uint64_t b = gen_() >> 6;  // 26 bits
        return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) *
               (1.0 / 9007199254740992.0);
    }

    // uniform double in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // standard normal via Box-Muller (two u01 draws per value)
    double normal() {
        const double u1 = u01();
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(6.283185307179586 * u2);
    }

    // uniform integer in [0, n)
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) return 0;
        auto k = static_cast<std::uint64_t>(u01() * static_cast<double>(n));
        return k >= n ? n - 1 : k;
    }

    // in-place Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    /// Derive an independent stream; used so per-task seeds come from the
    /// master seed by fixed arithmetic rather than shared mutable state.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        return mix64(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

private:
    static std::uint32_t mix(std::uint64_t seed) {
        const std::uint64_t m = mix64(seed);
        return static_cast<std::uint32_t>(m ^ (m >> 32));
    }
    static std::uint64_t mix64(std::uint64_t z) {  // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937 gen_;
};

}  // namespace hsfs

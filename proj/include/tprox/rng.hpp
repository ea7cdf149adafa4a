#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace tprox {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Folds a sequence of integers into one 64-bit key.
constexpr std::uint64_t derive_key(std::uint64_t seed) { return mix64(seed); }

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t next, Rest... rest) {
    return derive_key(mix64(seed) ^ (next + 0x632be59bd9b4e019ULL), static_cast<std::uint64_t>(rest)...);
}

// Counter-based generator: draw k of stream `key` is mix64(key + k * golden).
// Streams keyed by (run_seed, epoch, item) never depend on visit order.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    template <typename... Ids>
    static CounterRng keyed(std::uint64_t seed, Ids... ids) {
        return CounterRng(derive_key(seed, static_cast<std::uint64_t>(ids)...));
    }

    std::uint64_t next_u64() { return mix64(key_ ^ (0x9e3779b97f4a7c15ULL * ++counter_)); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::vector<double>& out) {
        for (auto& v : out) v = normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace tprox

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace hsi {

// Counter-based generator: the n-th draw is mix(key, n), so streams can be
// split by deriving child keys from labels without sharing state.
class Rng {
public:
    explicit Rng(std::uint64_t key = 0) : key_(mix(key ^ 0x9e3779b97f4a7c15ULL)) {}

    std::uint64_t next_u64() { return mix(key_ + 0xbf58476d1ce4e5b9ULL * ++counter_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Box-Muller; both halves consumed in order for reproducibility.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Independent child stream identified by a label and an index.
    Rng split(std::string_view label, std::uint64_t index = 0) const
    {
        return Rng(derive_seed(key_, label, index));
    }

    static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : label) {
            h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
        }
        return mix(seed ^ mix(h) ^ mix(index + 0x632be59bd9b4e019ULL));
    }

    static constexpr std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace hsi

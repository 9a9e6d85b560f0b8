#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

namespace advent {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// (base seed, index) pair.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
    return mix_seed(mix_seed(base) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// Deterministic random source. std::uniform_*_distribution is not portable
/// across standard libraries, so bounded and real draws are done by hand on
/// top of mt19937_64 (whose output sequence is fully specified).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % bound;
    }

    /// Uniform double in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    /// k distinct values from [0, n), in draw order (Floyd's algorithm, then
    /// a Fisher-Yates pass so the order is also uniform).
    std::vector<std::int64_t> sample_distinct(std::int64_t n, std::int64_t k) {
        if (k > n) k = n;
        std::vector<std::int64_t> out;
        out.reserve(static_cast<std::size_t>(k));
        std::unordered_set<std::int64_t> seen;
        for (std::int64_t j = n - k; j < n; ++j) {
            auto t = static_cast<std::int64_t>(below(static_cast<std::uint64_t>(j + 1)));
            if (seen.insert(t).second) {
                out.push_back(t);
            } else {
                seen.insert(j);
                out.push_back(j);
            }
        }
        shuffle(out);
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace advent

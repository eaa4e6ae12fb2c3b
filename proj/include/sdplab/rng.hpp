#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "sdplab/errors.hpp"
#include "sdplab/matrix.hpp"

namespace sdplab {

// Counter-based splittable PRNG. State is (key, counter); each draw mixes
// key + GOLDEN * ++counter through a splitmix64-style finalizer, so output
// depends only on arithmetic over fixed-width integers and is bit-identical
// across platforms. split(tag) derives an independent stream without
// advancing the parent.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : key_(mix(seed ^ KEY_TWEAK)), counter_(0) {}

    std::uint64_t next_u64() {
        counter_ += 1;
        return mix(key_ + GOLDEN * counter_);
    }

    RngState split(std::uint64_t tag) const {
        RngState child(0);
        child.key_ = mix(key_ ^ mix(tag + SPLIT_TWEAK));
        child.counter_ = 0;
        return child;
    }

    // Uniform on [0, 1): top 53 bits scaled by 2^-53.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two u64 draws.
    // u1 is shifted into (0, 1] so the log never sees zero.
    double next_normal() {
        const double u1 = 1.0 - next_unit();
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw ValueError("next_below: n must be positive");
        const std::uint64_t threshold = (~std::uint64_t{0} - n + 1) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    static constexpr std::uint64_t GOLDEN = 0x9e3779b97f4a7c15ull;
    static constexpr std::uint64_t KEY_TWEAK = 0x5851f42d4c957f2dull;
    static constexpr std::uint64_t SPLIT_TWEAK = 0xd1342543de82ef95ull;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

inline DenseMatrix seeded_normal(RngState& rng, std::size_t rows, std::size_t cols,
                                 double mean = 0.0, double stddev = 1.0) {
    if (stddev < 0.0) throw ValueError("seeded_normal: stddev must be non-negative");
    DenseMatrix out(rows, cols);
    for (double& v : out.values()) v = mean + stddev * rng.next_normal();
    return out;
}

inline DenseMatrix seeded_uniform(RngState& rng, std::size_t rows, std::size_t cols,
                                  double lo = 0.0, double hi = 1.0) {
    if (hi < lo) throw ValueError("seeded_uniform: hi must be >= lo");
    DenseMatrix out(rows, cols);
    for (double& v : out.values()) v = lo + (hi - lo) * rng.next_unit();
    return out;
}

// Fisher-Yates shuffle of index range [0, n).
inline std::vector<std::size_t> shuffled_indices(RngState& rng, std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace sdplab

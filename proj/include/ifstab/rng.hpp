#pragma once

#include "ifstab/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ifstab {

// Deterministic random source.  The raw engine (mt19937_64) has a
// standard-specified output sequence; the distribution transforms below are
// written out by hand because the std::*_distribution classes are free to
// differ between standard libraries.  Same seed, same call sequence =>
// bit-identical values on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) {
        require(p >= 0.0 && p <= 1.0, "bernoulli probability outside [0,1]");
        return uniform01() < p;
    }

    // Uniform integer in [0, n) by rejection, so the result does not depend
    // on platform-specific modulo bias tricks.
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "below() needs a positive bound");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<Index> permutation(Index n) {
        std::vector<Index> p(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
        for (Index i = n - 1; i > 0; --i) {
            const Index j = static_cast<Index>(below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
        }
        return p;
    }

    void fill_normal(Matrix& m) {
        for (Index c = 0; c < m.cols(); ++c)
            for (Index r = 0; r < m.rows(); ++r) m(r, c) = normal();
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Decorrelates the seed streams that one base seed fans out into (dataset
// draw, weight init, shuffles, ...).  splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Stream tags used across the library; listed here so no two call sites
// accidentally share a stream for the same base seed.
inline constexpr std::uint64_t kStreamData = 1;
inline constexpr std::uint64_t kStreamInit = 2;
inline constexpr std::uint64_t kStreamShuffle = 3;
inline constexpr std::uint64_t kStreamSplit = 4;
inline constexpr std::uint64_t kStreamEval = 5;
inline constexpr std::uint64_t kStreamOod = 6;

}  // namespace ifstab

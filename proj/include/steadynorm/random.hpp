#pragma once

// All randomness in the library flows through this header.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the C++ standard.
// Normal deviates: boost::random::normal_distribution (ziggurat), whose
// algorithm is fixed by Boost rather than by the standard library vendor.
// Together they make every seeded run reproducible across toolchains.

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace steadynorm {

using Rng = std::mt19937_64;

/// Derive an independent stream seed from a base seed and a stream index (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

    double operator()() { return dist_(engine_); }

    void fill(std::span<double> out) {
        for (double& x : out) {
            x = dist_(engine_);
        }
    }

    Rng& engine() { return engine_; }

private:
    Rng engine_;
    boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

/// Fisher-Yates permutation of [0, n) using Boost's portable integer distribution.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    for (std::size_t i = n; i > 1; --i) {
        boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    return idx;
}

}  // namespace steadynorm

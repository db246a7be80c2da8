#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fpp {

// splitmix64: tiny, fast, and identical on every platform. All randomness
// in the project funnels through this so that seeds reproduce bit-exactly
// (std::shuffle / std::normal_distribution are implementation-defined).
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Box-Muller; one value per call keeps the stream position predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }
};

// Deterministic seed derivation: children of one master seed never collide
// regardless of evaluation order (counter-based, no shared stream).
inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t counter = 0) {
    uint64_t z = master ^ (stream * 0xd6e8feb86659fd93ULL) ^ (counter * 0xca01f9dd9f1643ceULL);
    z = (z ^ (z >> 32)) * 0xd6e8feb86659fd93ULL;
    z = (z ^ (z >> 32)) * 0xd6e8feb86659fd93ULL;
    return z ^ (z >> 32);
}

}  // namespace fpp

#pragma once

#include <cstdint>

namespace albedo {

// Counter-based generator (splitmix64 core). Streams are addressed by
// (seed, stream, counter), so batches can be split deterministically without
// sharing state across threads.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : state(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull))) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit mantissa, identical across platforms
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

}  // namespace albedo

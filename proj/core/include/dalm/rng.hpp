#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>

namespace dalm {

// All randomness in a run flows from one root seed. Consumers derive their own
// stream via a (label, index) split so adding a consumer never perturbs the
// draws seen by existing ones.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t split_seed(uint64_t root, std::string_view label, uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a64(label)) ^ index);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    Rng(uint64_t root, std::string_view label, uint64_t index = 0)
        : engine_(split_seed(root, label, index)) {}

    double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    // Uniform integer in [lo, hi], inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    template <class Vec>
    void shuffle(Vec& v) {
        std::shuffle(v.begin(), v.end(), engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace dalm

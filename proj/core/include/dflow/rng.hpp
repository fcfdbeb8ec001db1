#pragma once

#include <cstdint>
#include <random>

namespace dflow {

// All stochastic components draw from this engine so runs are reproducible
// per seed. Derived seeds decorrelate independent streams (per-sample chains,
// per-seed experiment repeats).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return std::uniform_int_distribution<int>(0, n - 1)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    double uniform_range(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 step over seed ^ stream
        std::uint64_t z = (seed ^ (stream * 0x9e3779b97f4a7c15ULL)) + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace dflow

#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mtlforge {

// Version tag recorded in run reports so "same seed -> same result" claims
// are tied to a concrete generator.
inline constexpr const char* kRngVersion = "xoshiro256++-v1";

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a64(std::string_view s);

// xoshiro256++ with splitmix64 seeding. All randomness in the project flows
// through named streams derived from (seed, purpose), so independent parts
// of a run never perturb each other's sequences.
class Rng {
public:
    explicit Rng(uint64_t seed);

    // Independent stream for one purpose, e.g. stream(seed, "init/encoder").
    static Rng stream(uint64_t seed, std::string_view name);

    uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Unbiased integer in [0, n). n must be > 0.
    uint64_t bounded(uint64_t n);

    // Standard normal via Box-Muller (cosine branch only, stateless).
    double normal();

    // Standard normal conditioned on |z| <= limit, by rejection.
    double trunc_normal(double limit);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::array<uint64_t, 4> s_{};
};

}  // namespace mtlforge

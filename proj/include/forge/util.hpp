#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace forge {

/// splitmix64 stream. Small state so it can live inside every GameState and
/// be copied freely; bounded draws avoid <random> distributions, whose
/// output differs between standard library implementations.
class Rng {
public:
    Rng() = default;
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    /// Uniform real in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return uniform() < p; }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    uint64_t state_ = 0;
};

/// Derives an independent seed for a named sub-stream.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a 64-bit over raw bytes.
constexpr uint64_t fnv1a64(std::string_view bytes, uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string to_hex(uint64_t v);
uint64_t from_hex(std::string_view hex);

}  // namespace forge

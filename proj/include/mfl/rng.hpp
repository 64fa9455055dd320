#pragma once

#include <cmath>
#include <cstdint>

namespace mfl {

// SplitMix64. Also used as the stream generator itself: 64-bit output,
// period 2^64, more than adequate at desk-scale Monte Carlo sizes and
// fully specified so that seeded runs are stable across releases.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// One independent stream per particle / experiment cell.
// Stream i of master seed s starts from SplitMix64(s XOR (i+1)*0x9E3779B97F4A7C15).
class RngStream {
public:
    RngStream() : state_(0) {}
    explicit RngStream(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform on (0,1]
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; the pair partner is cached so state
    // advances identically regardless of call pattern parity.
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

inline RngStream spawn_stream(std::uint64_t master_seed, std::uint64_t index) {
    std::uint64_t x = master_seed ^ ((index + 1) * 0x9E3779B97F4A7C15ULL);
    return RngStream(splitmix64(x));
}

} // namespace mfl

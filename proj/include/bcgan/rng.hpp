#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace bcgan {

// Counter-based random streams. Every stream is derived from
// (root seed, purpose string, index), so a single config seed
// reproduces the entire run and independent consumers never share state.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    uint64_t s = h;
    return splitmix64(s);
}

inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

class RngStream {
public:
    RngStream() : state_(0x853c49e6748fea9bull) {}
    explicit RngStream(uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller; no cached spare so the stream
    // position is a pure function of the draw count
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        u1 = u1 > 1e-300 ? u1 : 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

private:
    uint64_t state_;
};

inline RngStream derive_stream(uint64_t seed, std::string_view purpose, uint64_t index = 0) {
    uint64_t h = hash_combine(seed, hash_str(purpose));
    h = hash_combine(h, index);
    return RngStream(h);
}

}  // namespace bcgan

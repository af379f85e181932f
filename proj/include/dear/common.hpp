#ifndef DEAR_COMMON_HPP
#define DEAR_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dear {

// Checkpoint container layout version, printed by `dear --version`.
inline constexpr int kCheckpointFormatVersion = 1;

// Error classes map 1:1 onto CLI exit codes.
struct invalid_argument_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct resource_limit_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Mask synthesis could not hit the requested coverage window.
struct generation_error : invalid_argument_error {
    using invalid_argument_error::invalid_argument_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidArgument = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitResourceLimit = 4;
inline constexpr int kExitDivergence = 5;

// splitmix64 step; used to derive independent seed streams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a;
    uint64_t x = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    return splitmix64(s);
}

// Deterministic RNG with hand-rolled distributions so streams do not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        // splitmix-expanded seeding of xoshiro256** state
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + int(next_u64() % uint64_t(hi - lo + 1));
    }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Runs fn(i) for i in [0,n) on up to `workers` threads. Each index is
// processed exactly once and writes only to its own slots, so results are
// identical for any worker count.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    int w = workers;
    if (w <= 0) w = int(std::thread::hardware_concurrency());
    if (w < 1) w = 1;
    if (w > n) w = int(n);
    if (w == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(size_t(w));
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&, t]() {
            for (int64_t i = t; i < n; i += w) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace dear

#endif  // DEAR_COMMON_HPP

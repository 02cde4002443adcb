#pragma once

#include <cmath>
#include <cstdint>

#include "mops/common.hpp"

namespace mops {

// Counter-based splittable generator. A draw is a pure function of
// (seed, stream, counter), so identical state always reproduces the same
// value and independent streams never share draws. The output function is
// the splitmix64 finalizer over a per-stream key plus a Weyl sequence.
class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0, uint64_t counter = 0)
        : seed_(seed), stream_(stream), counter_(counter) {
        key_ = finalize(seed ^ finalize(stream + 0x632be59bd9b4e019ull));
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    uint64_t counter() const { return counter_; }

    uint64_t next_u64() {
        uint64_t v = finalize(key_ + counter_ * 0x9e3779b97f4a7c15ull);
        ++counter_;
        return v;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; always consumes exactly two uniforms.
    double gaussian() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform index in [0, n) by 128-bit multiply; bias is negligible for
    // the dataset sizes used here.
    uint64_t uniform_index(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    Vec gaussian_vec(size_t n) {
        Vec v(n);
        for (auto& x : v) x = gaussian();
        return v;
    }

  private:
    static uint64_t finalize(uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t seed_, stream_, counter_, key_;
};

enum class RandKind { uniform, gaussian };

// Functional form of the generator used by code that stores raw state.
inline double prng_draw(uint64_t seed, uint64_t stream, uint64_t& counter, RandKind kind) {
    Rng r(seed, stream, counter);
    double v = kind == RandKind::uniform ? r.uniform() : r.gaussian();
    counter = r.counter();
    return v;
}

}  // namespace mops

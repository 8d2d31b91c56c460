#pragma once

#include <cmath>
#include <cstdint>

namespace rvol {

// SplitMix64 finalizer; used for seeding and stream derivation.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed plus up to three
// coordinates (purpose tag, run index, step/iteration). Deterministic and
// collision-resistant enough for disjoint (tag, a, b) tuples, so results do
// not depend on thread scheduling.
inline uint64_t derive_stream(uint64_t master, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t x = mix64(master ^ mix64(tag));
    x = mix64(x ^ mix64(a));
    return mix64(x ^ mix64(b));
}

// xoshiro256++ (Blackman/Vigna), seeded through SplitMix64.
class Xoshiro256pp {
  public:
    explicit Xoshiro256pp(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : s_) {
            sm += 0x9e3779b97f4a7c15ull;
            uint64_t z = sm;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on (0, 1): 53-bit mantissa, zero excluded so log() is safe.
    double uniform01() {
        const uint64_t bits = next() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// Standard normals via the Marsaglia polar method (rejection variant of
// Box-Muller; no trig calls). One spare is cached between draws.
class NormalSampler {
  public:
    explicit NormalSampler(uint64_t seed) : gen_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * gen_.uniform01() - 1.0;
            v = 2.0 * gen_.uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    void fill(double* out, int n) {
        for (int i = 0; i < n; ++i) out[i] = next();
    }

  private:
    Xoshiro256pp gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rvol

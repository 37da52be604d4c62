#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fido {

// Deterministic RNG wrapper. Distributions are hand-rolled on top of the
// raw 64-bit stream so that identical seeds give identical values on every
// standard library (std:: distributions do not guarantee that).
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Uniform on the open interval (0,1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    int uniform_int(int n) {
        uint64_t bound = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    // Standard normal via Box-Muller (cosine branch only; keeps the stream
    // layout trivially reproducible).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent substream from a seed and a path of indices
    // (image index, method id, trial, ...). splitmix64-style mixing.
    static Rng derive(uint64_t seed, std::initializer_list<uint64_t> path) {
        uint64_t h = seed;
        for (uint64_t p : path) {
            h += 0x9e3779b97f4a7c15ULL + p;
            h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
            h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
            h = h ^ (h >> 31);
        }
        return Rng(h);
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace fido

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace dualdst {

// Deterministic RNG wrapper. std::mt19937_64 is specified bit-exactly by the
// standard; the distribution helpers below are hand-rolled because the
// std::*_distribution classes are implementation-defined and would break the
// byte-identical-rerun guarantee across toolchains.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix(seed)) {}

    // Derive an independent child stream, e.g. one per dialogue.
    Rng child(uint64_t stream) const {
        return Rng(splitmix(seed_ ^ splitmix(stream + 0x9e3779b97f4a7c15ull)));
    }

    uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t uniform_int(uint64_t n) {
        uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            uint64_t x = engine_();
            if (x >= threshold) return x % n;
        }
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform_real() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    bool bernoulli(double p) { return uniform_real() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    template <typename T>
    const T& choice(const std::vector<T>& v) {
        return v[size_t(uniform_int(v.size()))];
    }

  private:
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace dualdst

#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mgan {

// Deterministic RNG used everywhere. Self-contained (splitmix64 +
// xoshiro256++) so streams do not depend on standard-library
// distribution internals. Sub-streams are derived by hashing a parent
// seed with a context string, which is what keeps parallel phantom
// generation and per-step dropout reproducible.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t seed, const std::string& context) {
    // FNV-1a over the context bytes, folded into the seed via splitmix.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : context) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    uint64_t s = seed ^ h;
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    Rng derive(const std::string& context) const {
        return Rng(hash_combine(state_[0] ^ state_[2], context));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return uint64_t(uniform() * double(n)) % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + int(uniform_index(uint64_t(hi - lo + 1)));
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mgan

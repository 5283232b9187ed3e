#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "qkdsim/bits.hpp"

namespace qkdsim {

// All randomness in a run flows from one 64-bit run seed. Consumers derive
// their own generator from (seed, role tag), so draw order inside one role
// cannot perturb any other role. Distributions are hand-rolled on top of
// mt19937_64 output: std::uniform_* implementations differ across standard
// libraries, and reports must be byte-identical for a given seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    uint8_t bit() { return static_cast<uint8_t>(eng_() >> 63); }

    // Uniform in [0,1) with 53 random mantissa bits.
    double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform in [0, bound) by rejection; bound must be nonzero.
    uint64_t below(uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % bound;
    }

    Bytes bytes(size_t n) {
        Bytes out(n);
        for (auto& b : out) b = static_cast<uint8_t>(eng_());
        return out;
    }

    BitVector bits(size_t n) {
        BitVector out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) out.push_back(bit());
        return out;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    // k distinct indices from [0, n), returned sorted ascending.
    std::vector<uint32_t> sample_indices(uint32_t n, uint32_t k) {
        std::vector<uint32_t> all(n);
        for (uint32_t i = 0; i < n; ++i) all[i] = i;
        shuffle(all);
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 eng_;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return detail::splitmix64(base ^ h);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t n) {
    return detail::splitmix64(derive_seed(base, tag) ^ detail::splitmix64(n));
}

inline Rng derive_rng(uint64_t base, std::string_view tag) { return Rng(derive_seed(base, tag)); }

inline Rng derive_rng(uint64_t base, std::string_view tag, uint64_t n) {
    return Rng(derive_seed(base, tag, n));
}

}  // namespace qkdsim

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {
namespace amplify {

// Binary entropy with h2(0) = h2(1) = 0.
inline double binary_entropy(double q) {
    if (q <= 0.0 || q >= 1.0) return 0.0;
    return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

// Final key length after squeezing out disclosed parity information, the
// eavesdropper's entropy at the observed QBER, and a safety margin:
//   n - leaked - ceil(n * h2(qber)) - margin
// A nonpositive result means the session cannot yield a key.
inline uint32_t output_length(uint32_t reconciled_len, uint64_t leaked_bits, double qber,
                              uint32_t margin) {
    int64_t entropy_term = static_cast<int64_t>(std::ceil(reconciled_len * binary_entropy(qber)));
    int64_t r = int64_t(reconciled_len) - int64_t(leaked_bits) - entropy_term - int64_t(margin);
    if (r <= 0)
        throw InsufficientMaterial(static_cast<uint64_t>(1 - r),
                                   "privacy amplification leaves no key material");
    return static_cast<uint32_t>(r);
}

struct AmplificationParams {
    BitVector seed;           // Toeplitz diagonals; exchanged in the clear
    uint32_t output_len = 0;  // bits
    uint32_t security_margin = 64;

    void validate(size_t input_len) const {
        if (output_len < 1) throw Error(Errc::contract, "output_len must be >= 1");
        if (seed.size() != input_len + output_len - 1)
            throw Error(Errc::contract, "Toeplitz seed length must be in+out-1");
    }
};

inline AmplificationParams make_params(Rng& rng, size_t input_len, uint32_t output_len,
                                       uint32_t margin = 64) {
    AmplificationParams p;
    p.output_len = output_len;
    p.security_margin = margin;
    p.seed = rng.bits(input_len + output_len - 1);
    return p;
}

// Toeplitz universal hash over GF(2): out[i] = XOR_j T[i][j] & key[j] with
// T[i][j] = seed[i - j + n - 1]. Computed as a sliding window over the seed
// against the bit-reversed key, operating on packed 64-bit words; at desk
// scale this keeps full sessions well under the runtime budget. The naive
// matrix-product form is kept in tests as the oracle.
inline BitVector toeplitz_hash(const BitVector& key, const AmplificationParams& params) {
    params.validate(key.size());
    const size_t n = key.size();
    const size_t m = params.output_len;
    const size_t nwords = (n + 63) / 64;

    std::vector<uint64_t> krev(nwords, 0);
    for (size_t t = 0; t < n; ++t)
        if (key[n - 1 - t]) krev[t / 64] |= uint64_t(1) << (t % 64);

    // one guard word so unaligned 64-bit windows never read past the end
    std::vector<uint64_t> s((n + m - 1 + 63) / 64 + 1, 0);
    for (size_t i = 0; i < params.seed.size(); ++i)
        if (params.seed[i]) s[i / 64] |= uint64_t(1) << (i % 64);

    auto window64 = [&s](size_t bit_off) {
        size_t w = bit_off / 64, r = bit_off % 64;
        uint64_t lo = s[w] >> r;
        if (r == 0) return lo;
        return lo | (s[w + 1] << (64 - r));
    };

    BitVector out;
    out.reserve(m);
    for (size_t i = 0; i < m; ++i) {
        uint64_t acc = 0;
        for (size_t w = 0; w < nwords; ++w) acc ^= window64(i + 64 * w) & krev[w];
        out.push_back(static_cast<uint8_t>(std::popcount(acc) & 1));
    }
    return out;
}

// pa-seed message payload: 4-byte output length, then the packed seed bits.
inline Bytes encode_pa_seed(const AmplificationParams& params) {
    Bytes out;
    put_u32be(out, params.output_len);
    Bytes packed = params.seed.pack();
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
}

inline AmplificationParams decode_pa_seed(const Bytes& payload, size_t input_len) {
    ByteReader r(payload);
    AmplificationParams p;
    p.output_len = r.u32be();
    if (p.output_len < 1) throw Error(Errc::parse, "pa-seed: zero output length");
    size_t seed_bits = input_len + p.output_len - 1;
    Bytes packed = r.bytes(r.remaining());
    if (packed.size() != (seed_bits + 7) / 8) throw Error(Errc::parse, "pa-seed: bad seed size");
    p.seed = BitVector::unpack(packed, seed_bits);
    return p;
}

}  // namespace amplify
}  // namespace qkdsim

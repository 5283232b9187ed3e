#pragma once

#include <cstdint>
#include <vector>

#include "qkdsim/errors.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {
namespace qchannel {

// Sender-side state of one photon: which basis it was prepared in and the
// encoded bit. basis 0 = rectilinear, 1 = diagonal.
struct PhotonRecord {
    uint32_t index = 0;
    uint8_t basis = 0;
    uint8_t bit = 0;
};

// Receiver-side record for a photon that survived the channel.
struct DetectionRecord {
    uint32_t index = 0;
    uint8_t basis = 0;
    uint8_t bit = 0;
};

struct ChannelParams {
    double loss_prob = 0.0;  // photon not detected
    double flip_prob = 0.0;  // bit flip given matched bases (intrinsic QBER)
    double eve_prob = 0.0;   // per-photon intercept-resend probability

    void validate() const {
        auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!in01(loss_prob) || !in01(flip_prob) || !in01(eve_prob))
            throw Error(Errc::contract, "channel probabilities must lie in [0,1]");
    }
};

// Alice's random encoding of `count` photons. Basis and bit are independent
// fair coin flips from the seeded generator.
inline std::vector<PhotonRecord> encode_batch(uint32_t count, uint64_t rng_seed) {
    if (count == 0) throw Error(Errc::contract, "encode_batch: count must be >= 1");
    Rng rng(rng_seed);
    std::vector<PhotonRecord> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) out.push_back({i, rng.bit(), rng.bit()});
    return out;
}

// Lossy probabilistic transmission with an optional intercept-resend
// eavesdropper. A photon can be measured only once: when Eve attacks, she
// measures in a random basis and re-prepares the photon in her basis with her
// outcome, so Bob sees Eve's photon, not Alice's. Bob measures in a uniform
// random basis; a matched-basis measurement returns the arriving bit (flipped
// with flip_prob), a mismatched one returns a uniform bit. Lost photons are
// simply absent from the output; there is no dark-count path that could fake
// a detection.
inline std::vector<DetectionRecord> transmit(const std::vector<PhotonRecord>& photons,
                                             const ChannelParams& params, uint64_t rng_seed) {
    if (photons.empty()) throw Error(Errc::contract, "transmit: empty photon batch");
    params.validate();
    Rng rng(rng_seed);
    std::vector<DetectionRecord> out;
    out.reserve(photons.size());
    for (const auto& p : photons) {
        if (rng.bernoulli(params.loss_prob)) continue;
        uint8_t arriving_basis = p.basis;
        uint8_t arriving_bit = p.bit;
        if (rng.bernoulli(params.eve_prob)) {
            uint8_t eve_basis = rng.bit();
            uint8_t eve_bit = (eve_basis == arriving_basis) ? arriving_bit : rng.bit();
            arriving_basis = eve_basis;
            arriving_bit = eve_bit;
        }
        uint8_t bob_basis = rng.bit();
        uint8_t bob_bit;
        if (bob_basis == arriving_basis) {
            bob_bit = arriving_bit ^ (rng.bernoulli(params.flip_prob) ? 1 : 0);
        } else {
            bob_bit = rng.bit();
        }
        out.push_back({p.index, bob_basis, bob_bit});
    }
    return out;
}

}  // namespace qchannel
}  // namespace qkdsim

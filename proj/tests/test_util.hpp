#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/link.hpp"
#include "qkdsim/message.hpp"
#include "qkdsim/reconcile.hpp"
#include "qkdsim/sim_clock.hpp"

namespace qkdsim::test {

// In-place link fixture: clock and log outlive the runtime that points at them.
struct TestLink {
    SimClock clock;
    EventLog log;
    LinkRuntime link;

    explicit TestLink(const std::string& id = "L1") : link(id, &clock, &log) {}
};

// Independent leak accounting: replay the channel transcript, pair each
// parity reply with its request, and count one disclosed bit per requested
// interval (payloads are 8-byte interval pairs). A reply to an empty request
// is the 128-bit whole-key digest.
inline uint64_t transcript_parity_bits(
    const std::vector<ClassicalChannel::TranscriptEntry>& transcript) {
    uint64_t total = 0;
    uint64_t pending_intervals = 0;
    bool pending_digest_request = false;
    for (const auto& entry : transcript) {
        Frame f = Frame::decode(entry.raw);
        if (f.type == static_cast<uint8_t>(MsgType::parity_request)) {
            pending_digest_request = f.payload.empty();
            pending_intervals = f.payload.size() / 8;
        } else if (f.type == static_cast<uint8_t>(MsgType::parity_reply)) {
            total += pending_digest_request ? 128 : pending_intervals;
        }
    }
    return total;
}

// Analytic top-level parity count for an error-free cascade run, computed
// from the documented block-size schedule without touching the
// implementation.
inline uint64_t expected_clean_leak(uint32_t n, double qber, uint32_t passes,
                                    uint32_t max_block, double factor = 0.73) {
    uint32_t k;
    if (qber == 0.0) {
        k = max_block;
        passes = 1;
    } else {
        double q = std::max(qber, 0.01);
        k = static_cast<uint32_t>(std::ceil(factor / q));
        k = std::clamp<uint32_t>(k, 4, max_block);
    }
    uint64_t total = 0;
    for (uint32_t pass = 0; pass < passes; ++pass) {
        uint32_t kk = std::min(k, max_block);
        total += (n + kk - 1) / kk;
        if (k <= max_block / 2)
            k *= 2;
        else
            k = max_block;
    }
    return total + 128;  // final digest counted as leakage
}

}  // namespace qkdsim::test

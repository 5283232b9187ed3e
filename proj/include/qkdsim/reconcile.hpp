#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <tuple>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/hash.hpp"
#include "qkdsim/message.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {
namespace reconcile {

// Parity of key[start, start+len). The primitive the whole conversation
// exchanges.
inline uint8_t block_parity(const BitVector& key, uint32_t start, uint32_t len) {
    if (uint64_t(start) + len > key.size())
        throw Error(Errc::contract, "block_parity: range out of bounds");
    return key.parity(start, len);
}

struct CascadeConfig {
    uint32_t passes = 4;
    double initial_block_factor = 0.73;
    uint32_t max_block = 1u << 16;
    // Both sides derive per-pass shuffles from this without extra messages.
    // The session driver seeds it from the session id.
    uint64_t shuffle_seed = 0;
    uint64_t session_id = 0;

    void validate() const {
        if (passes < 1) throw Error(Errc::contract, "cascade: passes must be >= 1");
        if (!(initial_block_factor > 0))
            throw Error(Errc::contract, "cascade: initial_block_factor must be > 0");
    }
};

struct ReconciliationResult {
    BitVector corrected_key;
    uint64_t leaked_bits = 0;  // parity bits disclosed, final digest included
    uint32_t rounds = 0;       // request/reply message pairs
    bool verified = false;     // whole-key digests matched after the last pass
};

// Parity queries address a virtual domain that concatenates the per-pass
// shuffled views of the key: pass j (1-based) owns virtual indices
// [(j-1)*n, j*n), and virtual index v maps to original position
// perm_j[v mod n]. Blocks and binary-search halves are contiguous intervals
// there, which keeps the wire format to plain (start, length) pairs even for
// shuffled passes.
struct Interval {
    uint32_t start = 0;
    uint32_t length = 0;
};

inline Bytes encode_parity_request(const std::vector<Interval>& intervals) {
    Bytes out;
    out.reserve(intervals.size() * 8);
    for (const auto& iv : intervals) {
        put_u32be(out, iv.start);
        put_u32be(out, iv.length);
    }
    return out;
}

inline std::vector<Interval> decode_parity_request(const Bytes& payload) {
    if (payload.size() % 8 != 0) throw Error(Errc::parse, "bad parity request payload");
    ByteReader r(payload);
    std::vector<Interval> out(payload.size() / 8);
    for (auto& iv : out) {
        iv.start = r.u32be();
        iv.length = r.u32be();
    }
    return out;
}

// Reply payload is exactly the packed parity bits, one per requested
// interval; the count comes from the paired request. Transcript replay
// therefore accounts for disclosed bits by counting request intervals.
inline Bytes encode_parity_reply(const std::vector<uint8_t>& parities) {
    BitVector bits;
    for (uint8_t p : parities) bits.push_back(p);
    return bits.pack();
}

inline std::vector<uint8_t> decode_parity_reply(const Bytes& payload, uint32_t count) {
    if (payload.size() != (count + 7) / 8)
        throw Error(Errc::parse, "parity reply size does not match request");
    BitVector bits = BitVector::unpack(payload, count);
    std::vector<uint8_t> out(count);
    for (uint32_t i = 0; i < count; ++i) out[i] = bits[i];
    return out;
}

// Lazily built per-pass shuffles shared by both conversation ends.
class PassDomain {
public:
    PassDomain(uint32_t key_len, uint64_t shuffle_seed)
        : n_(key_len), shuffle_seed_(shuffle_seed) {}

    uint32_t key_len() const { return n_; }

    // perm(j)[slot] = original key position; pass 1 is the identity.
    const std::vector<uint32_t>& perm(uint32_t pass) {
        while (perms_.size() < pass) {
            uint32_t j = static_cast<uint32_t>(perms_.size()) + 1;
            std::vector<uint32_t> p(n_);
            for (uint32_t i = 0; i < n_; ++i) p[i] = i;
            if (j > 1) {
                Rng rng = derive_rng(shuffle_seed_, "cascade-shuffle", j);
                rng.shuffle(p);
            }
            perms_.push_back(std::move(p));
        }
        return perms_[pass - 1];
    }

    uint8_t parity(const BitVector& key, const Interval& iv) {
        if (iv.length == 0) throw Error(Errc::contract, "empty parity interval");
        uint32_t pass_lo = iv.start / n_;
        uint32_t pass_hi = (uint32_t)((uint64_t(iv.start) + iv.length - 1) / n_);
        if (pass_lo != pass_hi) throw Error(Errc::contract, "interval spans passes");
        if (pass_lo >= 4096) throw Error(Errc::contract, "implausible pass index");
        const auto& p = perm(pass_lo + 1);
        uint32_t slot = iv.start % n_;
        uint8_t acc = 0;
        for (uint32_t i = 0; i < iv.length; ++i) acc ^= key[p[slot + i]];
        return acc;
    }

private:
    uint32_t n_;
    uint64_t shuffle_seed_;
    std::vector<std::vector<uint32_t>> perms_;
};

// Whole-key verification digest compared after the final pass. Keyed from the
// session id (public), so both sides compute it without extra agreement.
inline MacTag key_digest(const BitVector& key, uint64_t session_id) {
    Bytes k = derive_key_bytes("cascade-digest", std::to_string(session_id));
    Bytes data = key.pack();
    put_u64be(data, key.size());
    return mac_tag(k, data);
}

// Bob's view of Alice during reconciliation: block parities over the virtual
// domain plus the final whole-key digest. A digest request is wired as a
// parity-request with an empty interval list.
class ParityOracle {
public:
    virtual ~ParityOracle() = default;
    virtual std::vector<uint8_t> parities(const std::vector<Interval>& intervals) = 0;
    virtual MacTag final_digest() = 0;
};

// Direct in-process oracle over the reference key; used by unit tests and as
// the computational core of the channel-backed server below.
class LocalParityOracle : public ParityOracle {
public:
    LocalParityOracle(const BitVector& reference_key, uint64_t shuffle_seed, uint64_t session_id)
        : key_(reference_key),
          domain_(static_cast<uint32_t>(reference_key.size()), shuffle_seed),
          session_id_(session_id) {}

    std::vector<uint8_t> parities(const std::vector<Interval>& intervals) override {
        std::vector<uint8_t> out;
        out.reserve(intervals.size());
        for (const auto& iv : intervals) out.push_back(domain_.parity(key_, iv));
        return out;
    }

    MacTag final_digest() override { return key_digest(key_, session_id_); }

private:
    BitVector key_;
    PassDomain domain_;
    uint64_t session_id_;
};

// Alice's responder: answers one parity-request frame from the channel.
class ParityServer {
public:
    ParityServer(ClassicalChannel& chan, Side side, uint64_t session_id, const BitVector& key,
                 uint64_t shuffle_seed)
        : chan_(chan), side_(side), session_id_(session_id), local_(key, shuffle_seed, session_id) {}

    void handle_one() {
        Frame req = chan_.recv(side_, MsgType::parity_request, session_id_);
        auto intervals = decode_parity_request(req.payload);
        Bytes reply;
        if (intervals.empty()) {
            MacTag d = local_.final_digest();
            reply.assign(d.begin(), d.end());
        } else {
            reply = encode_parity_reply(local_.parities(intervals));
        }
        chan_.send(side_, MsgType::parity_reply, session_id_, std::move(reply));
    }

private:
    ClassicalChannel& chan_;
    Side side_;
    uint64_t session_id_;
    LocalParityOracle local_;
};

// Bob's oracle that round-trips every query through the authenticated
// classical channel; the paired ParityServer answers synchronously.
class ChannelParityOracle : public ParityOracle {
public:
    ChannelParityOracle(ClassicalChannel& chan, Side side, uint64_t session_id,
                        ParityServer& server)
        : chan_(chan), side_(side), session_id_(session_id), server_(server) {}

    std::vector<uint8_t> parities(const std::vector<Interval>& intervals) override {
        chan_.send(side_, MsgType::parity_request, session_id_, encode_parity_request(intervals));
        server_.handle_one();
        Frame reply = chan_.recv(side_, MsgType::parity_reply, session_id_);
        return decode_parity_reply(reply.payload, static_cast<uint32_t>(intervals.size()));
    }

    MacTag final_digest() override {
        chan_.send(side_, MsgType::parity_request, session_id_, Bytes());
        server_.handle_one();
        Frame reply = chan_.recv(side_, MsgType::parity_reply, session_id_);
        if (reply.payload.size() != 16) throw Error(Errc::protocol, "bad digest reply");
        MacTag d;
        std::copy(reply.payload.begin(), reply.payload.end(), d.begin());
        return d;
    }

private:
    ClassicalChannel& chan_;
    Side side_;
    uint64_t session_id_;
    ParityServer& server_;
};

namespace detail {

// Initial block size: the classic heuristic scaled by the QBER estimate,
// clamped to [4, max_block]. A zero estimate is treated specially by the
// caller (single verification pass over max-size blocks).
inline uint32_t initial_block_size(double qber, const CascadeConfig& cfg) {
    if (qber == 0.0) return cfg.max_block;
    double q = std::max(qber, 0.01);
    auto k = static_cast<uint32_t>(std::ceil(cfg.initial_block_factor / q));
    return std::clamp<uint32_t>(k, 4, cfg.max_block);
}

}  // namespace detail

// Cascade: iterative block-parity reconciliation with binary error search and
// full backtracking. Bob (the caller) corrects his key toward Alice's
// (behind the oracle). Every parity bit Alice discloses is counted in
// leaked_bits; the final whole-key digest adds its 128 bits conservatively.
//
// Backtracking is the defining feature: whenever a bit is corrected, every
// earlier pass's block containing that position flips relative parity, and
// newly odd blocks are re-searched (smallest block first) until no odd block
// remains anywhere.
inline ReconciliationResult cascade(const BitVector& bob_key, double qber_estimate,
                                    ParityOracle& oracle, const CascadeConfig& config) {
    config.validate();
    if (bob_key.empty()) throw Error(Errc::contract, "cascade: empty key");
    if (!(qber_estimate >= 0.0 && qber_estimate < 0.5))
        throw Error(Errc::contract, "cascade: qber estimate outside [0, 0.5)");

    const uint32_t n = static_cast<uint32_t>(bob_key.size());
    BitVector key = bob_key;
    PassDomain domain(n, config.shuffle_seed);

    // A zero estimate still runs one verification pass so estimation misses
    // are caught before the digest comparison.
    const uint32_t total_passes = (qber_estimate == 0.0) ? 1 : config.passes;

    struct PassState {
        uint32_t k = 0;                 // block size
        uint32_t nblocks = 0;
        std::vector<uint32_t> inv;      // original position -> slot
        std::vector<uint8_t> diff;      // per-block relative parity
    };
    std::vector<PassState> passes;
    passes.reserve(total_passes);

    ReconciliationResult res;

    auto block_len = [n](const PassState& ps, uint32_t b) {
        uint32_t lo = b * ps.k;
        uint32_t hi = std::min(lo + ps.k, n);
        return hi - lo;
    };

    // (block length, pass index, block index); smallest block first.
    std::set<std::tuple<uint32_t, uint32_t, uint32_t>> odd;

    auto toggle_block = [&](uint32_t pass_idx, uint32_t block_idx) {
        PassState& ps = passes[pass_idx];
        ps.diff[block_idx] ^= 1;
        if (ps.diff[block_idx])
            odd.insert({block_len(ps, block_idx), pass_idx, block_idx});
    };

    auto query_one = [&](const Interval& iv) {
        auto ps = oracle.parities({iv});
        res.leaked_bits += 1;
        res.rounds += 1;
        return ps[0];
    };

    // Finds and flips the error bit inside an odd block of pass `pass_idx`,
    // then propagates parity toggles to every initialized pass.
    auto binary_search_fix = [&](uint32_t pass_idx, uint32_t block_idx) {
        PassState& ps = passes[pass_idx];
        const uint32_t base = pass_idx * n;
        uint32_t lo = block_idx * ps.k;
        uint32_t hi = std::min(lo + ps.k, n);
        while (hi - lo > 1) {
            uint32_t half = (hi - lo + 1) / 2;
            Interval left{base + lo, half};
            uint8_t alice = query_one(left);
            uint8_t mine = domain.parity(key, left);
            if (alice != mine)
                hi = lo + half;
            else
                lo = lo + half;
        }
        uint32_t orig = domain.perm(pass_idx + 1)[lo];
        key.flip(orig);
        for (uint32_t p = 0; p < passes.size(); ++p)
            toggle_block(p, passes[p].inv[orig] / passes[p].k);
    };

    uint32_t k = detail::initial_block_size(qber_estimate, config);
    for (uint32_t pass = 1; pass <= total_passes; ++pass) {
        PassState ps;
        ps.k = std::min(k, config.max_block);
        ps.nblocks = (n + ps.k - 1) / ps.k;
        const auto& perm = domain.perm(pass);
        ps.inv.resize(n);
        for (uint32_t slot = 0; slot < n; ++slot) ps.inv[perm[slot]] = slot;
        ps.diff.assign(ps.nblocks, 0);
        passes.push_back(std::move(ps));
        PassState& cur = passes.back();

        const uint32_t base = (pass - 1) * n;
        std::vector<Interval> intervals;
        intervals.reserve(cur.nblocks);
        for (uint32_t b = 0; b < cur.nblocks; ++b) {
            uint32_t lo = b * cur.k;
            intervals.push_back({base + lo, std::min(cur.k, n - lo)});
        }
        auto alice_par = oracle.parities(intervals);
        res.leaked_bits += intervals.size();
        res.rounds += 1;
        for (uint32_t b = 0; b < cur.nblocks; ++b) {
            uint8_t mine = domain.parity(key, intervals[b]);
            if (mine != alice_par[b]) {
                cur.diff[b] = 1;
                odd.insert({block_len(cur, b), pass - 1, b});
            }
        }

        while (!odd.empty()) {
            auto [len, p, b] = *odd.begin();
            odd.erase(odd.begin());
            if (!passes[p].diff[b]) continue;  // stale: fixed by a cascade flip
            binary_search_fix(p, b);
        }

        if (k <= config.max_block / 2)
            k *= 2;
        else
            k = config.max_block;
    }

    MacTag alice_digest = oracle.final_digest();
    res.leaked_bits += 128;
    res.rounds += 1;
    res.verified = (alice_digest == key_digest(key, config.session_id));
    res.corrected_key = std::move(key);
    return res;
}

}  // namespace reconcile
}  // namespace qkdsim

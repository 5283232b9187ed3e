#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qkdsim/amplify.hpp"
#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/link.hpp"
#include "qkdsim/message.hpp"
#include "qkdsim/qchannel.hpp"
#include "qkdsim/reconcile.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {
namespace bb84 {

// Bob's public basis announcement: detected indices and the bases used,
// never the measured values.
struct SiftAnnouncement {
    struct Entry {
        uint32_t index;
        uint8_t basis;
    };
    std::vector<Entry> entries;
};

struct SiftRetainList {
    std::vector<uint32_t> indices;
};

struct SiftedKey {
    BitVector bits;
    std::vector<uint32_t> source_indices;

    size_t size() const { return bits.size(); }
};

inline SiftAnnouncement make_announcement(const std::vector<qchannel::DetectionRecord>& dets) {
    SiftAnnouncement a;
    a.entries.reserve(dets.size());
    for (const auto& d : dets) a.entries.push_back({d.index, d.basis});
    return a;
}

// Alice keeps only the announced entries Bob measured in her basis and reads
// those bit values out of her database, in index order.
inline std::pair<SiftedKey, SiftRetainList> sift(const std::vector<qchannel::PhotonRecord>& alice_db,
                                                 const SiftAnnouncement& announcement) {
    std::map<uint32_t, const qchannel::PhotonRecord*> by_index;
    for (const auto& p : alice_db) by_index[p.index] = &p;
    SiftedKey key;
    SiftRetainList retain;
    for (const auto& e : announcement.entries) {
        auto it = by_index.find(e.index);
        if (it == by_index.end())
            throw Error(Errc::protocol, "announced index " + std::to_string(e.index) +
                                            " unknown to sender database");
        if (it->second->basis == e.basis) {
            retain.indices.push_back(e.index);
            key.bits.push_back(it->second->bit);
            key.source_indices.push_back(e.index);
        }
    }
    return {std::move(key), std::move(retain)};
}

// Bob keeps only the entries on Alice's revised list.
inline SiftedKey apply_retain(const std::vector<qchannel::DetectionRecord>& detections,
                              const SiftRetainList& retain) {
    std::map<uint32_t, const qchannel::DetectionRecord*> by_index;
    for (const auto& d : detections) by_index[d.index] = &d;
    SiftedKey key;
    for (uint32_t idx : retain.indices) {
        auto it = by_index.find(idx);
        if (it == by_index.end())
            throw Error(Errc::protocol,
                        "retain index " + std::to_string(idx) + " not among detections");
        key.bits.push_back(it->second->bit);
        key.source_indices.push_back(idx);
    }
    return key;
}

constexpr uint32_t kMinSiftedForEstimate = 64;

// Seeded sample of distinct key positions disclosed for QBER estimation.
inline std::vector<uint32_t> choose_sample_positions(uint32_t key_len, double fraction,
                                                     uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw Error(Errc::contract, "sample fraction must be in (0,1)");
    auto k = static_cast<uint32_t>(std::llround(fraction * key_len));
    k = std::max<uint32_t>(k, 1);
    Rng rng(seed);
    return rng.sample_indices(key_len, k);
}

inline SiftedKey remove_positions(const SiftedKey& key, const std::vector<uint32_t>& sorted_pos) {
    SiftedKey out;
    size_t next = 0;
    for (uint32_t i = 0; i < key.bits.size(); ++i) {
        if (next < sorted_pos.size() && sorted_pos[next] == i) {
            ++next;
            continue;
        }
        out.bits.push_back(key.bits[i]);
        out.source_indices.push_back(key.source_indices[i]);
    }
    return out;
}

struct QberEstimate {
    double qber = 0.0;
    uint32_t sample_size = 0;
    uint32_t mismatches = 0;
    SiftedKey alice_trimmed;
    SiftedKey bob_trimmed;
};

// Discloses a seeded random sample, compares it, and removes the disclosed
// positions from both keys; disclosed bits never reach downstream key
// material.
inline QberEstimate estimate_qber(const SiftedKey& alice_key, const SiftedKey& bob_key,
                                  double sample_fraction, uint64_t rng_seed,
                                  uint32_t min_len = kMinSiftedForEstimate) {
    if (alice_key.size() != bob_key.size())
        throw Error(Errc::protocol, "sifted keys have different lengths");
    if (alice_key.size() < min_len)
        throw InsufficientMaterial(min_len - alice_key.size(),
                                   "sifted key too short for QBER estimation");
    auto positions =
        choose_sample_positions(static_cast<uint32_t>(alice_key.size()), sample_fraction, rng_seed);
    QberEstimate est;
    est.sample_size = static_cast<uint32_t>(positions.size());
    for (uint32_t p : positions)
        if (alice_key.bits[p] != bob_key.bits[p]) ++est.mismatches;
    est.qber = double(est.mismatches) / double(est.sample_size);
    est.alice_trimmed = remove_positions(alice_key, positions);
    est.bob_trimmed = remove_positions(bob_key, positions);
    return est;
}

// --- wire payloads -----------------------------------------------------

inline Bytes encode_announcement(const SiftAnnouncement& a) {
    Bytes out;
    put_u32be(out, static_cast<uint32_t>(a.entries.size()));
    for (const auto& e : a.entries) {
        put_u32be(out, e.index);
        out.push_back(e.basis);
    }
    return out;
}

inline SiftAnnouncement decode_announcement(const Bytes& payload) {
    ByteReader r(payload);
    uint32_t n = r.u32be();
    SiftAnnouncement a;
    a.entries.resize(n);
    for (size_t i = 0; i < a.entries.size(); ++i) {
        a.entries[i].index = r.u32be();
        a.entries[i].basis = r.u8();
        if (i > 0 && a.entries[i].index <= a.entries[i - 1].index)
            throw Error(Errc::protocol, "announcement indices not strictly increasing");
    }
    if (!r.done()) throw Error(Errc::parse, "trailing bytes in announcement");
    return a;
}

inline Bytes encode_retain(const SiftRetainList& rl) {
    Bytes out;
    put_u32be(out, static_cast<uint32_t>(rl.indices.size()));
    for (uint32_t i : rl.indices) put_u32be(out, i);
    return out;
}

inline SiftRetainList decode_retain(const Bytes& payload) {
    ByteReader r(payload);
    uint32_t n = r.u32be();
    SiftRetainList rl;
    rl.indices.resize(n);
    for (auto& i : rl.indices) i = r.u32be();
    return rl;
}

inline Bytes encode_qber_sample(const std::vector<uint32_t>& positions, const BitVector& bits) {
    Bytes out;
    put_u32be(out, static_cast<uint32_t>(positions.size()));
    for (uint32_t p : positions) put_u32be(out, p);
    Bytes packed = bits.pack();
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
}

inline std::pair<std::vector<uint32_t>, BitVector> decode_qber_sample(const Bytes& payload) {
    ByteReader r(payload);
    uint32_t n = r.u32be();
    std::vector<uint32_t> positions(n);
    for (auto& p : positions) p = r.u32be();
    Bytes packed = r.bytes(r.remaining());
    return {std::move(positions), BitVector::unpack(packed, n)};
}

// --- full link session ---------------------------------------------------

enum class SessionStatus {
    ok,
    eavesdrop_suspected,
    insufficient_material,
    mac_failure,
    reconciliation_failure,
    timeout,
    protocol_error,
};

inline const char* session_status_name(SessionStatus s) {
    switch (s) {
        case SessionStatus::ok: return "ok";
        case SessionStatus::eavesdrop_suspected: return "eavesdrop-suspected";
        case SessionStatus::insufficient_material: return "insufficient-material";
        case SessionStatus::mac_failure: return "mac-failure";
        case SessionStatus::reconciliation_failure: return "reconciliation-failure";
        case SessionStatus::timeout: return "timeout";
        case SessionStatus::protocol_error: return "protocol-error";
    }
    return "unknown";
}

struct SessionParams {
    uint32_t photon_count = 10000;
    double sample_fraction = 0.1;
    double abort_threshold = 0.11;
    uint32_t min_sifted = kMinSiftedForEstimate;
    uint32_t pa_margin = 64;
    reconcile::CascadeConfig cascade;
};

struct SessionResult {
    SessionStatus status = SessionStatus::protocol_error;
    uint64_t session_id = 0;
    double qber = 0.0;
    uint32_t raw_count = 0;
    uint32_t detected = 0;
    uint32_t sifted_len = 0;
    uint32_t disclosed = 0;
    uint32_t reconciled_len = 0;
    uint32_t final_len = 0;
    uint64_t leaked_bits = 0;
    uint32_t rounds = 0;
    MacKeySource mac_source = MacKeySource::psk;
    uint64_t block_id = 0;
    std::string detail;

    bool ok() const { return status == SessionStatus::ok; }
};

// Runs the full pipeline on one link: encode, transmit, sift, estimate,
// reconcile, amplify, store. On success both endpoint stores gain bitwise
// identical blocks; on any abort no key is stored anywhere. All classical
// control traffic crosses the link's authenticated channel, so a tampered
// message surfaces here as a mac-failure abort.
inline SessionResult run_link_session(LinkRuntime& link, const SessionParams& params,
                                      uint64_t run_seed) {
    if (!link.operational) throw Error(Errc::contract, "link " + link.link_id + " is down");

    SessionResult res;
    res.session_id = link.next_session_id++;
    const uint64_t sid = res.session_id;

    MacKeyInfo mac = link.mac_provider->key_for_session(sid);
    res.mac_source = mac.source;
    link.channel.drain();  // clear residue from any aborted prior conversation
    link.channel.set_mac_key(mac.key);

    if (link.switched && link.clock) link.clock->advance(link.switch_delay_ms);

    auto abort_with = [&](SessionStatus st, const std::string& why) {
        res.status = st;
        res.detail = why;
        link.note("session", "link " + link.link_id + " session " + std::to_string(sid) +
                                 " aborted: " + why);
        return res;
    };

    try {
        auto photons =
            qchannel::encode_batch(params.photon_count, derive_seed(run_seed, "alice-encode", sid));
        res.raw_count = params.photon_count;
        auto detections = qchannel::transmit(photons, link.channel_params,
                                             derive_seed(run_seed, "quantum-channel", sid));
        res.detected = static_cast<uint32_t>(detections.size());

        // sifting: Bob announces bases, Alice replies with the retain list
        auto announcement = make_announcement(detections);
        link.channel.send(Side::b, MsgType::sift_announce, sid, encode_announcement(announcement));
        Frame af = link.channel.recv(Side::a, MsgType::sift_announce, sid);
        auto [alice_sifted, retain] = sift(photons, decode_announcement(af.payload));

        link.channel.send(Side::a, MsgType::sift_retain, sid, encode_retain(retain));
        Frame rf = link.channel.recv(Side::b, MsgType::sift_retain, sid);
        SiftedKey bob_sifted = apply_retain(detections, decode_retain(rf.payload));
        res.sifted_len = static_cast<uint32_t>(bob_sifted.size());

        if (bob_sifted.size() < params.min_sifted)
            return abort_with(SessionStatus::insufficient_material,
                              "sifted key below minimum (" + std::to_string(bob_sifted.size()) +
                                  " < " + std::to_string(params.min_sifted) + ")");

        // QBER estimation over a disclosed seeded sample
        uint64_t sample_seed = derive_seed(run_seed, "qber-sample", sid);
        auto positions = choose_sample_positions(static_cast<uint32_t>(alice_sifted.size()),
                                                 params.sample_fraction, sample_seed);
        BitVector alice_sample;
        for (uint32_t p : positions) alice_sample.push_back(alice_sifted.bits[p]);
        link.channel.send(Side::a, MsgType::qber_sample, sid,
                          encode_qber_sample(positions, alice_sample));
        Frame qs = link.channel.recv(Side::b, MsgType::qber_sample, sid);
        auto [bob_positions, alice_sample_rx] = decode_qber_sample(qs.payload);
        BitVector bob_sample;
        for (uint32_t p : bob_positions) bob_sample.push_back(bob_sifted.bits[p]);
        link.channel.send(Side::b, MsgType::qber_sample, sid,
                          encode_qber_sample(bob_positions, bob_sample));
        Frame qr = link.channel.recv(Side::a, MsgType::qber_sample, sid);
        auto [pos_echo, bob_sample_rx] = decode_qber_sample(qr.payload);
        if (pos_echo != positions || alice_sample_rx.size() != bob_sample_rx.size())
            throw Error(Errc::protocol, "qber sample position sets diverged");

        // Alice compares her sample with Bob's reply; Bob's computation over
        // the same exchanged bits lands on the same count.
        uint32_t mismatches = 0;
        for (size_t i = 0; i < positions.size(); ++i)
            if (alice_sample[i] != bob_sample_rx[i]) ++mismatches;
        res.disclosed = static_cast<uint32_t>(positions.size());
        res.qber = double(mismatches) / double(positions.size());

        SiftedKey alice_key = remove_positions(alice_sifted, positions);
        SiftedKey bob_key = remove_positions(bob_sifted, bob_positions);

        if (res.qber > params.abort_threshold)
            return abort_with(SessionStatus::eavesdrop_suspected,
                              "qber " + std::to_string(res.qber) + " above threshold " +
                                  std::to_string(params.abort_threshold));

        // reconciliation: Bob corrects toward Alice over the parity channel
        reconcile::CascadeConfig cc = params.cascade;
        cc.session_id = sid;
        cc.shuffle_seed = derive_seed(sid, "cascade-shuffle-base");
        reconcile::ParityServer server(link.channel, Side::a, sid, alice_key.bits,
                                       cc.shuffle_seed);
        reconcile::ChannelParityOracle oracle(link.channel, Side::b, sid, server);
        auto rec = reconcile::cascade(bob_key.bits, res.qber, oracle, cc);
        res.reconciled_len = static_cast<uint32_t>(rec.corrected_key.size());
        res.leaked_bits = rec.leaked_bits;
        res.rounds = rec.rounds;
        if (!rec.verified)
            return abort_with(SessionStatus::reconciliation_failure,
                              "whole-key digest mismatch after cascade");

        // privacy amplification
        uint32_t out_len;
        try {
            out_len = amplify::output_length(res.reconciled_len, res.leaked_bits, res.qber,
                                             params.pa_margin);
        } catch (const InsufficientMaterial& e) {
            return abort_with(SessionStatus::insufficient_material, e.what());
        }
        Rng pa_rng = derive_rng(run_seed, "pa-seed", sid);
        auto pa = amplify::make_params(pa_rng, alice_key.size(), out_len, params.pa_margin);
        link.channel.send(Side::a, MsgType::pa_seed, sid, amplify::encode_pa_seed(pa));
        Frame pf = link.channel.recv(Side::b, MsgType::pa_seed, sid);
        auto pa_bob = amplify::decode_pa_seed(pf.payload, rec.corrected_key.size());

        BitVector final_alice = amplify::toeplitz_hash(alice_key.bits, pa);
        BitVector final_bob = amplify::toeplitz_hash(rec.corrected_key, pa_bob);
        res.final_len = out_len;

        res.block_id = link.store_a.append_block(final_alice);
        link.store_b.append_block(final_bob);
        res.status = SessionStatus::ok;
        return res;
    } catch (const Error& e) {
        switch (e.code()) {
            case Errc::mac_failure:
                return abort_with(SessionStatus::mac_failure, e.what());
            case Errc::timeout:
                return abort_with(SessionStatus::timeout, e.what());
            case Errc::insufficient_material:
                return abort_with(SessionStatus::insufficient_material, e.what());
            case Errc::protocol:
            case Errc::parse:
                return abort_with(SessionStatus::protocol_error, e.what());
            default:
                throw;
        }
    }
}

}  // namespace bb84
}  // namespace qkdsim

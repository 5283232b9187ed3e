#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/hash.hpp"
#include "qkdsim/sim_clock.hpp"

namespace qkdsim {

// Classical-channel message tags. The channel carries protocol control
// traffic only; its security requirement is integrity, not confidentiality.
enum class MsgType : uint8_t {
    sift_announce = 1,
    sift_retain = 2,
    qber_sample = 3,
    parity_request = 4,
    parity_reply = 5,
    pa_seed = 6,
    sync_digest = 7,
    relay_key = 8,
};

inline bool is_known_qkd_tag(uint8_t t) { return t >= 1 && t <= 8; }

inline const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::sift_announce: return "sift-announce";
        case MsgType::sift_retain: return "sift-retain";
        case MsgType::qber_sample: return "qber-sample";
        case MsgType::parity_request: return "parity-request";
        case MsgType::parity_reply: return "parity-reply";
        case MsgType::pa_seed: return "pa-seed";
        case MsgType::sync_digest: return "sync-digest";
        case MsgType::relay_key: return "relay-key";
    }
    return "unknown";
}

// Wire form: 1-byte type, 8-byte big-endian session id, 4-byte big-endian
// payload length, payload, 16-byte MAC.
struct Frame {
    uint8_t type = 0;
    uint64_t session_id = 0;
    Bytes payload;
    MacTag mac{};

    Bytes encode() const {
        Bytes out;
        out.reserve(1 + 8 + 4 + payload.size() + 16);
        out.push_back(type);
        put_u64be(out, session_id);
        put_u32be(out, static_cast<uint32_t>(payload.size()));
        out.insert(out.end(), payload.begin(), payload.end());
        out.insert(out.end(), mac.begin(), mac.end());
        return out;
    }

    static Frame decode(std::span<const uint8_t> raw) {
        try {
            ByteReader r(raw);
            Frame f;
            f.type = r.u8();
            f.session_id = r.u64be();
            uint32_t len = r.u32be();
            f.payload = r.bytes(len);
            Bytes m = r.bytes(16);
            std::copy(m.begin(), m.end(), f.mac.begin());
            if (!r.done()) throw Error(Errc::parse, "trailing bytes after frame");
            return f;
        } catch (const std::out_of_range&) {
            throw Error(Errc::parse, "truncated frame");
        }
    }
};

// MAC input binds the tag, session, per-direction sequence number and payload
// so that reordering or cross-session splicing breaks verification.
inline MacTag frame_mac(const Bytes& key, uint8_t type, uint64_t session_id, uint64_t seq,
                        const Bytes& payload) {
    Bytes data;
    data.push_back(type);
    put_u64be(data, session_id);
    put_u64be(data, seq);
    data.insert(data.end(), payload.begin(), payload.end());
    return mac_tag(key, data);
}

enum class Side : uint8_t { a = 0, b = 1 };

inline Side other(Side s) { return s == Side::a ? Side::b : Side::a; }
inline const char* side_name(Side s) { return s == Side::a ? "a" : "b"; }

// Where the current classical-channel MAC key came from.
enum class MacKeySource { psk, quantum };

inline const char* mac_source_name(MacKeySource s) {
    return s == MacKeySource::psk ? "psk" : "quantum";
}

struct MacKeyInfo {
    Bytes key;
    MacKeySource source = MacKeySource::psk;
};

// Supplies the classical channel's MAC key at session start. Both endpoints
// of a link hold the same provider state in this in-process simulator.
class MacKeyProvider {
public:
    virtual ~MacKeyProvider() = default;
    virtual MacKeyInfo key_for_session(uint64_t session_id) = 0;
};

// Fixed-key provider for tests and standalone channel use.
class StaticMacKeyProvider : public MacKeyProvider {
public:
    explicit StaticMacKeyProvider(Bytes key) : key_(std::move(key)) {}
    MacKeyInfo key_for_session(uint64_t) override { return {key_, MacKeySource::psk}; }

private:
    Bytes key_;
};

// Reliable, ordered, in-process duplex message channel. Every frame is
// MAC-verified on receipt; fault hooks can tamper with queued bytes or stall
// a receiver to exercise the failure paths.
class ClassicalChannel {
public:
    struct TranscriptEntry {
        Side from;
        uint64_t seq;
        Bytes raw;  // encoded frame bytes as they crossed the channel
    };

    ClassicalChannel() = default;
    ClassicalChannel(SimClock* clock, EventLog* log, std::string link_id)
        : clock_(clock), log_(log), link_id_(std::move(link_id)) {}

    void set_mac_key(Bytes key) { mac_key_ = std::move(key); }
    const Bytes& mac_key() const { return mac_key_; }

    void set_timeout_ms(uint32_t ms) { timeout_ms_ = ms; }
    uint32_t timeout_ms() const { return timeout_ms_; }

    void send(Side from, MsgType type, uint64_t session_id, Bytes payload) {
        send_raw(from, static_cast<uint8_t>(type), session_id, std::move(payload));
    }

    void send_raw(Side from, uint8_t type, uint64_t session_id, Bytes payload) {
        Frame f;
        f.type = type;
        f.session_id = session_id;
        f.payload = std::move(payload);
        uint64_t seq = send_seq_[idx(from)]++;
        f.mac = frame_mac(mac_key_, f.type, f.session_id, seq, f.payload);
        Bytes raw = f.encode();
        if (tamper_next_) {
            tamper_next_ = false;
            size_t bit = tamper_bit_ % (raw.size() * 8);
            raw[bit / 8] ^= uint8_t(1u << (bit % 8));
            note("fault", "tampered frame type=" + std::to_string(f.type) +
                              " bit=" + std::to_string(bit));
        }
        transcript_.push_back({from, seq, raw});
        queue_[idx(from)].push_back(std::move(raw));
    }

    // Receives and authenticates the next frame addressed to `to`. Throws on
    // MAC mismatch, unexpected tag, or timeout (stalled/silent peer).
    Frame recv(Side to, std::optional<MsgType> expect, uint64_t session_id) {
        Frame f = recv_any(to, session_id);
        if (!is_known_qkd_tag(f.type))
            throw Error(Errc::protocol, "unknown classical message tag");
        if (expect && f.type != static_cast<uint8_t>(*expect))
            throw Error(Errc::protocol,
                        std::string("expected ") + msg_type_name(*expect) + ", got " +
                            msg_type_name(static_cast<MsgType>(f.type)));
        return f;
    }

    // Tag-agnostic receive used by the handshake layer, which has its own
    // message type space on the same framing.
    Frame recv_any(Side to, uint64_t session_id) {
        auto& q = queue_[idx(other(to))];
        if (stalled_ || q.empty()) {
            stalled_ = false;
            if (clock_) clock_->advance(timeout_ms_);
            throw Error(Errc::timeout, "peer did not respond within " +
                                           std::to_string(timeout_ms_) + "ms");
        }
        Bytes raw = std::move(q.front());
        q.pop_front();
        Frame f;
        try {
            f = Frame::decode(raw);
        } catch (const Error&) {
            throw Error(Errc::mac_failure, "frame corrupted in transit");
        }
        uint64_t seq = recv_seq_[idx(to)]++;
        MacTag want = frame_mac(mac_key_, f.type, f.session_id, seq, f.payload);
        if (want != f.mac) throw Error(Errc::mac_failure, "frame MAC verification failed");
        if (f.session_id != session_id)
            throw Error(Errc::protocol, "frame for wrong session");
        return f;
    }

    bool pending(Side to) const { return !queue_[idx(other(to))].empty(); }

    // Starts a fresh conversation window: undelivered frames are discarded
    // and both directions' sequence counters restart, so residue from an
    // aborted conversation (say a stalled peer) cannot poison the next one.
    // Armed faults stay armed. Both endpoints of a link apply this at the
    // same protocol boundary.
    void drain() {
        queue_[0].clear();
        queue_[1].clear();
        send_seq_[0] = send_seq_[1] = 0;
        recv_seq_[0] = recv_seq_[1] = 0;
    }

    // Fault hooks. The default tamper bit lands just past the 13-byte frame
    // header, inside the payload of any realistic frame.
    void tamper_next(size_t bit_index = 14 * 8) { tamper_next_ = true; tamper_bit_ = bit_index; }
    void stall_next() { stalled_ = true; }

    const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
    void clear_transcript() { transcript_.clear(); }

    const std::string& link_id() const { return link_id_; }

private:
    static size_t idx(Side s) { return static_cast<size_t>(s); }

    void note(const std::string& cat, const std::string& msg) {
        if (log_) log_->record(clock_ ? clock_->now_ms() : 0, cat, "link " + link_id_ + ": " + msg);
    }

    SimClock* clock_ = nullptr;
    EventLog* log_ = nullptr;
    std::string link_id_;
    Bytes mac_key_ = Bytes(32, 0);
    uint32_t timeout_ms_ = 5000;  // stalled-peer budget, simulated
    std::deque<Bytes> queue_[2];  // indexed by sender side
    uint64_t send_seq_[2] = {0, 0};
    uint64_t recv_seq_[2] = {0, 0};
    bool tamper_next_ = false;
    size_t tamper_bit_ = 0;
    bool stalled_ = false;
    std::vector<TranscriptEntry> transcript_;
};

}  // namespace qkdsim

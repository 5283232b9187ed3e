#pragma once

#include <algorithm>
#include <cstring>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/hash.hpp"
#include "qkdsim/link.hpp"
#include "qkdsim/message.hpp"
#include "qkdsim/qnet.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/sim_clock.hpp"

namespace qkdsim {
namespace securechan {

// ---------------------------------------------------------------------------
// Ciphersuite
// ---------------------------------------------------------------------------

// How the session sources its keys: a conventional computed exchange, quantum
// material as the shared secret (A), quantum material used directly as the
// session keys (B), or quantum material consumed as a one-time pad (C).
enum class Kex : uint8_t {
    classical_stub = 1,
    quantum_shared_secret = 2,
    quantum_direct_keys = 3,
    quantum_otp = 4,
};

enum class Cipher : uint8_t { block_cipher_stub = 1, one_time_pad = 2 };

// Two MAC slots so suite negotiation over MACs is an exercisable choice; both
// are served by the keyed-hash construction.
enum class MacAlg : uint8_t { keyed_hash_mac = 1, keyed_hash_mac_alt = 2 };

enum class PrfAlg : uint8_t { keyed_hash_prf = 1 };

enum class Auth : uint8_t { pre_shared_key = 1 };

// Nonce placement in the derivation chain: ike keys the prf with the publics
// and feeds the secret as data; tls keys the prf with the secret.
enum class Flavor : uint8_t { ike = 1, tls = 2 };

struct Ciphersuite {
    Kex kex = Kex::classical_stub;
    Cipher cipher = Cipher::block_cipher_stub;
    MacAlg mac_alg = MacAlg::keyed_hash_mac;
    PrfAlg prf_alg = PrfAlg::keyed_hash_prf;
    Auth auth = Auth::pre_shared_key;

    bool quantum() const { return kex != Kex::classical_stub; }

    void validate() const {
        bool otp_kex = (kex == Kex::quantum_otp);
        bool otp_cipher = (cipher == Cipher::one_time_pad);
        if (otp_kex != otp_cipher)
            throw Error(Errc::contract, "one-time-pad cipher and quantum-otp kex imply each other");
    }

    void encode(Bytes& out) const {
        out.push_back(static_cast<uint8_t>(kex));
        out.push_back(static_cast<uint8_t>(cipher));
        out.push_back(static_cast<uint8_t>(mac_alg));
        out.push_back(static_cast<uint8_t>(prf_alg));
        out.push_back(static_cast<uint8_t>(auth));
    }

    static Ciphersuite decode(ByteReader& r) {
        Ciphersuite s;
        s.kex = static_cast<Kex>(r.u8());
        s.cipher = static_cast<Cipher>(r.u8());
        s.mac_alg = static_cast<MacAlg>(r.u8());
        s.prf_alg = static_cast<PrfAlg>(r.u8());
        s.auth = static_cast<Auth>(r.u8());
        if (static_cast<uint8_t>(s.kex) < 1 || static_cast<uint8_t>(s.kex) > 4 ||
            static_cast<uint8_t>(s.cipher) < 1 || static_cast<uint8_t>(s.cipher) > 2)
            throw Error(Errc::parse, "bad ciphersuite encoding");
        s.validate();
        return s;
    }

    bool operator==(const Ciphersuite&) const = default;

    const char* name() const {
        switch (kex) {
            case Kex::classical_stub: return "classical-stub";
            case Kex::quantum_shared_secret: return "quantum-shared-secret";
            case Kex::quantum_direct_keys: return "quantum-direct-keys";
            case Kex::quantum_otp: return "quantum-otp";
        }
        return "unknown";
    }
};

inline Ciphersuite suite_classical() { return {}; }
inline Ciphersuite suite_option_a() { return {Kex::quantum_shared_secret, Cipher::block_cipher_stub,
                                              MacAlg::keyed_hash_mac, PrfAlg::keyed_hash_prf,
                                              Auth::pre_shared_key}; }
inline Ciphersuite suite_option_b() { return {Kex::quantum_direct_keys, Cipher::block_cipher_stub,
                                              MacAlg::keyed_hash_mac_alt, PrfAlg::keyed_hash_prf,
                                              Auth::pre_shared_key}; }
inline Ciphersuite suite_option_c() { return {Kex::quantum_otp, Cipher::one_time_pad,
                                              MacAlg::keyed_hash_mac, PrfAlg::keyed_hash_prf,
                                              Auth::pre_shared_key}; }

inline std::optional<Ciphersuite> suite_by_name(const std::string& name) {
    if (name == "classical-stub" || name == "classical") return suite_classical();
    if (name == "quantum-shared-secret" || name == "a" || name == "A") return suite_option_a();
    if (name == "quantum-direct-keys" || name == "b" || name == "B") return suite_option_b();
    if (name == "quantum-otp" || name == "c" || name == "C") return suite_option_c();
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Session keys and exhaustion policy
// ---------------------------------------------------------------------------

struct SessionKeys {
    Bytes skeyseed;
    Bytes enc_i2r, enc_r2i;  // empty in one-time-pad mode
    Bytes mac_i2r, mac_r2i;

    bool operator==(const SessionKeys&) const = default;
};

struct ExhaustionPolicy {
    enum class Mode { block_with_timeout, fallback_classical, fail };
    Mode mode = Mode::fail;
    uint32_t timeout_ms = 5000;

    void validate() const {
        if (mode == Mode::block_with_timeout && timeout_ms == 0)
            throw Error(Errc::contract, "block-with-timeout needs a positive timeout");
    }
};

inline const char* policy_name(ExhaustionPolicy::Mode m) {
    switch (m) {
        case ExhaustionPolicy::Mode::block_with_timeout: return "block-with-timeout";
        case ExhaustionPolicy::Mode::fallback_classical: return "fallback-classical";
        case ExhaustionPolicy::Mode::fail: return "fail";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Key material sources
// ---------------------------------------------------------------------------

// Synchronized pairwise key material as the two endpoints see it. consume_pair
// returns (initiator copy, responder copy); with healthy synchronization the
// halves are identical, and any divergence surfaces as MAC failures above.
class MaterialSource {
public:
    virtual ~MaterialSource() = default;
    virtual std::pair<BitVector, BitVector> consume_pair(uint64_t nbits) = 0;
    virtual uint64_t available_bits() const = 0;

    // Blocks (in simulated time) until nbits are available or the timeout
    // lapses. The default has no producer to wait on.
    virtual bool wait_for(uint64_t nbits, uint32_t timeout_ms) {
        (void)timeout_ms;
        return available_bits() >= nbits;
    }
};

namespace detail {
// Drains scheduled events (producer refills) until the requested amount is
// available or the deadline passes; simulated time advances accordingly.
inline bool wait_with_events(SimClock* clock, EventQueue* events, uint32_t timeout_ms,
                             const std::function<uint64_t()>& available, uint64_t nbits) {
    if (available() >= nbits) return true;
    if (!clock) return false;
    uint64_t deadline = clock->now_ms() + timeout_ms;
    while (available() < nbits) {
        if (!events || !events->advance_to_next(*clock, deadline)) {
            clock->advance(deadline - clock->now_ms());
            return false;
        }
    }
    return true;
}
}  // namespace detail

// Material drawn from one QKD link's synchronized stores on a dedicated
// stream; the normal source for adjacent peers.
class LinkStreamSource : public MaterialSource {
public:
    LinkStreamSource(LinkRuntime& link, std::string stream_id, SimClock* clock = nullptr,
                     EventQueue* events = nullptr)
        : link_(link), stream_id_(std::move(stream_id)), clock_(clock), events_(events) {
        if (!link_.store_a.has_stream(stream_id_)) link_.open_stream_pair(stream_id_);
    }

    std::pair<BitVector, BitVector> consume_pair(uint64_t nbits) override {
        return link_.consume_pair(stream_id_, nbits);
    }

    uint64_t available_bits() const override {
        return std::min(link_.store_a.available_bits(stream_id_),
                        link_.store_b.available_bits(stream_id_));
    }

    bool wait_for(uint64_t nbits, uint32_t timeout_ms) override {
        return detail::wait_with_events(clock_, events_, timeout_ms,
                                        [this] { return available_bits(); }, nbits);
    }

private:
    LinkRuntime& link_;
    std::string stream_id_;
    SimClock* clock_;
    EventQueue* events_;
};

// Material for non-adjacent peers: pulled across the network by multi-hop
// relay on demand, pooled at both ends.
class RelayedSource : public MaterialSource {
public:
    RelayedSource(qnet::Network& net, std::string src, std::string dst,
                  uint32_t chunk_bits = 4096, EventQueue* events = nullptr)
        : net_(net), src_(std::move(src)), dst_(std::move(dst)), chunk_bits_(chunk_bits),
          events_(events) {}

    std::pair<BitVector, BitVector> consume_pair(uint64_t nbits) override {
        while (pooled() < nbits) {
            uint64_t need = nbits - pooled();
            uint32_t chunk = static_cast<uint32_t>(std::max<uint64_t>(need, chunk_bits_));
            auto rr = qnet::relay_key(net_, src_, dst_, chunk);
            pool_src_.append(rr.source_copy);
            pool_dst_.append(rr.delivered);
        }
        BitVector a = pool_src_.slice(pos_, nbits);
        BitVector b = pool_dst_.slice(pos_, nbits);
        pos_ += nbits;
        return {std::move(a), std::move(b)};
    }

    uint64_t available_bits() const override {
        // what the pools hold plus what a relay could still pull
        uint64_t relayable = UINT64_MAX;
        auto path = qnet::route(net_.topo, src_, dst_);
        if (!path) return pooled();
        for (const auto& lid : path->hops) {
            auto& l = net_.link(lid);
            uint64_t have = l.store_a.has_stream(qnet::kRelayStream)
                                ? std::min(l.store_a.available_bits(qnet::kRelayStream),
                                           l.store_b.available_bits(qnet::kRelayStream))
                                : std::min(l.store_a.total_available(), l.store_b.total_available());
            relayable = std::min(relayable, have);
        }
        return pooled() + relayable;
    }

    bool wait_for(uint64_t nbits, uint32_t timeout_ms) override {
        return detail::wait_with_events(&net_.clock, events_, timeout_ms,
                                        [this] { return available_bits(); }, nbits);
    }

private:
    uint64_t pooled() const { return pool_src_.size() - pos_; }

    qnet::Network& net_;
    std::string src_, dst_;
    uint32_t chunk_bits_;
    EventQueue* events_;
    BitVector pool_src_, pool_dst_;
    size_t pos_ = 0;
};

// Scripted source for tests and exhaustion scenarios.
class PoolSource : public MaterialSource {
public:
    explicit PoolSource(SimClock* clock = nullptr, EventQueue* events = nullptr)
        : clock_(clock), events_(events) {}

    void add(const BitVector& bits) {
        pool_a_.append(bits);
        pool_b_.append(bits);
    }

    std::pair<BitVector, BitVector> consume_pair(uint64_t nbits) override {
        if (pool_a_.size() - pos_ < nbits)
            throw InsufficientMaterial(nbits - (pool_a_.size() - pos_), "scripted pool");
        BitVector a = pool_a_.slice(pos_, nbits);
        BitVector b = pool_b_.slice(pos_, nbits);
        pos_ += nbits;
        return {std::move(a), std::move(b)};
    }

    uint64_t available_bits() const override { return pool_a_.size() - pos_; }

    bool wait_for(uint64_t nbits, uint32_t timeout_ms) override {
        return detail::wait_with_events(clock_, events_, timeout_ms,
                                        [this] { return available_bits(); }, nbits);
    }

private:
    SimClock* clock_;
    EventQueue* events_;
    BitVector pool_a_, pool_b_;
    size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Handshake wire
// ---------------------------------------------------------------------------

enum class HsType : uint8_t {
    client_hello = 0x11,
    server_hello = 0x12,
    auth_init = 0x13,
    auth_resp = 0x14,
    record = 0x15,
    rekey_notice = 0x16,
};

// In-process handshake transport reusing the standard frame layout. Each side
// keeps its own view of the conversation (what it sent untampered, what it
// received possibly tampered); authentication MACs are computed over those
// views, which is what makes negotiation tampering detectable.
class HandshakeWire {
public:
    // Delivers a frame to the peer, applying any pending fault.
    Frame transmit(Side from, HsType type, uint64_t session_id, Bytes payload) {
        Frame f;
        f.type = static_cast<uint8_t>(type);
        f.session_id = session_id;
        f.payload = std::move(payload);
        Bytes raw = f.encode();
        view_[idx(from)].push_back(raw);
        if (stall_next_) {
            stall_next_ = false;
            throw Error(Errc::negotiation_failure, "peer did not answer in time");
        }
        if (tamper_next_) {
            tamper_next_ = false;
            size_t bit = tamper_bit_ % (raw.size() * 8);
            raw[bit / 8] ^= uint8_t(1u << (bit % 8));
        }
        crossed_.push_back(raw);
        view_[idx(other(from))].push_back(raw);
        return Frame::decode(raw);
    }

    // The conversation as one side saw it, concatenated; auth MAC input.
    Bytes view_bytes(Side s) const {
        Bytes out;
        for (const auto& raw : view_[idx(s)]) out.insert(out.end(), raw.begin(), raw.end());
        return out;
    }

    const std::vector<Bytes>& transcript() const { return crossed_; }
    void log_record_frame(const Bytes& raw) { crossed_.push_back(raw); }

    void tamper_next(size_t bit_index) {
        tamper_next_ = true;
        tamper_bit_ = bit_index;
    }
    void stall_next() { stall_next_ = true; }

private:
    static size_t idx(Side s) { return static_cast<size_t>(s); }
    std::vector<Bytes> view_[2];
    std::vector<Bytes> crossed_;
    bool tamper_next_ = false;
    size_t tamper_bit_ = 0;
    bool stall_next_ = false;
};

// ---------------------------------------------------------------------------
// Negotiation and key derivation pieces
// ---------------------------------------------------------------------------

// Quantum attributes are only proposable when a working QKD route exists;
// otherwise they must never reach the wire.
inline std::vector<Ciphersuite> filter_proposals(const std::vector<Ciphersuite>& proposals,
                                                 const qnet::ConnectionInfo& conn) {
    std::vector<Ciphersuite> out;
    for (const auto& s : proposals) {
        s.validate();
        if (s.quantum() && !conn.possible) continue;
        out.push_back(s);
    }
    return out;
}

// The responder picks the first suite in its own preference order that the
// initiator proposed.
inline Ciphersuite select_suite(const std::vector<Ciphersuite>& proposed,
                                const std::vector<Ciphersuite>& responder_prefs) {
    for (const auto& pref : responder_prefs)
        for (const auto& p : proposed)
            if (p == pref) return pref;
    throw Error(Errc::negotiation_failure, "no common ciphersuite");
}

struct HandshakePublics {
    Bytes random_i, random_r;  // 32 bytes each
    Bytes nonce_i, nonce_r;    // 16 bytes each

    Bytes randoms_and_nonces() const {
        Bytes out = random_i;
        out.insert(out.end(), random_r.begin(), random_r.end());
        out.insert(out.end(), nonce_i.begin(), nonce_i.end());
        out.insert(out.end(), nonce_r.begin(), nonce_r.end());
        return out;
    }
};

// skeyseed per the negotiated chain flavor, then labeled counter-mode prf
// expansion into the directional key block.
inline Bytes derive_skeyseed(Flavor flavor, const Bytes& secret, const HandshakePublics& pub) {
    Bytes publics = pub.randoms_and_nonces();
    if (flavor == Flavor::ike) return prf(publics, secret);
    return prf(secret, publics);
}

inline SessionKeys expand_session_keys(const Bytes& skeyseed, const HandshakePublics& pub,
                                       const Ciphersuite& suite, size_t enc_len, size_t mac_len) {
    Bytes context = pub.randoms_and_nonces();
    suite.encode(context);
    bool otp = suite.cipher == Cipher::one_time_pad;
    size_t total = (otp ? 0 : 2 * enc_len) + 2 * mac_len;
    Bytes block = prf_expand(skeyseed, "key expansion", context, total);
    SessionKeys keys;
    keys.skeyseed = skeyseed;
    size_t off = 0;
    auto slice = [&](size_t n) {
        Bytes out(block.begin() + off, block.begin() + off + n);
        off += n;
        return out;
    };
    if (!otp) {
        keys.enc_i2r = slice(enc_len);
        keys.enc_r2i = slice(enc_len);
    }
    keys.mac_i2r = slice(mac_len);
    keys.mac_r2i = slice(mac_len);
    return keys;
}

namespace detail {

// Deliberately toy finite-field key exchange so the classical fallback path
// is executable end to end. Parameters are far below any secure size.
constexpr uint64_t kToyDhPrime = 0xFFFFFFFFFFFFFFC5ULL;  // 2^64 - 59
constexpr uint64_t kToyDhGen = 5;

inline uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
}

inline uint64_t powmod(uint64_t base, uint64_t exp, uint64_t m) {
    uint64_t r = 1;
    base %= m;
    while (exp) {
        if (exp & 1) r = mulmod(r, base, m);
        base = mulmod(base, base, m);
        exp >>= 1;
    }
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Secure session
// ---------------------------------------------------------------------------

// Scripted handshake faults for tests and scenario fault injection.
struct HandshakeFaults {
    std::optional<size_t> tamper_client_hello_bit;
    std::optional<size_t> tamper_server_hello_bit;
    bool stall_responder = false;
};

struct HandshakeConfig {
    std::vector<Ciphersuite> initiator_proposals{suite_classical()};
    std::vector<Ciphersuite> responder_preferences{suite_classical()};
    Flavor flavor = Flavor::ike;
    ExhaustionPolicy policy;
    Bytes psk = derive_key_bytes("pair-psk", "default");
    Bytes responder_psk;               // empty: same as psk
    size_t enc_key_len = 16;
    size_t mac_key_len = 16;
    uint32_t rekey_after_records = 0;  // 0 disables the trigger
    uint64_t rekey_after_bytes = 0;
    uint32_t otp_window_bits = 8192;   // reservation window granularity in OTP mode
    HandshakeFaults faults;
};

struct SessionStats {
    uint64_t pad_bits_consumed = 0;   // one-time-pad bits only
    uint64_t mac_key_bits_consumed = 0;
    uint64_t shared_secret_bits_consumed = 0;
    uint64_t direct_key_bits_consumed = 0;
    uint64_t plaintext_bytes_protected = 0;
    uint32_t records_protected = 0;
    uint32_t rekeys = 0;
    bool downgraded = false;
};

// One protected conversation between two in-process peers. The object holds
// both endpoints' states, the way the link simulator does; every byte that
// "crosses" does so through the handshake wire or as an encoded record frame,
// so fault injection exercises the real failure paths.
class SecureSession {
public:
    SecureSession(uint64_t session_id, MaterialSource& material, const HandshakeConfig& cfg,
                  const qnet::ConnectionInfo& conn, uint64_t rng_seed, SimClock* clock = nullptr,
                  EventLog* log = nullptr)
        : session_id_(session_id),
          material_(material),
          cfg_(cfg),
          conn_(conn),
          rng_(derive_seed(rng_seed, "handshake", session_id)),
          clock_(clock),
          log_(log) {
        cfg_.policy.validate();
        handshake(cfg_.initiator_proposals);
    }

    const Ciphersuite& suite() const { return suite_; }
    Flavor flavor() const { return cfg_.flavor; }
    const SessionKeys& keys(Side s) const { return s == Side::a ? keys_i_ : keys_r_; }
    const HandshakePublics& publics() const { return publics_; }
    const SessionStats& stats() const { return stats_; }
    const std::vector<Bytes>& transcript() const { return wire_.transcript(); }
    HandshakeWire& wire() { return wire_; }
    uint64_t session_id() const { return session_id_; }

    // Encrypt-then-MAC (or pad-then-MAC) one record from `sender`. Returns the
    // encoded record frame as it would cross the transport. The sequence
    // counter only advances once the record is fully built, so a failed
    // attempt (exhaustion, policy error) leaves the session consistent.
    Bytes protect(Side sender, const Bytes& plaintext) {
        maybe_rekey();
        uint64_t seq = send_seq_[idx(sender)];
        uint8_t dir = dir_byte(sender);
        Bytes cipher;
        if (suite_.cipher == Cipher::one_time_pad) {
            BitVector pad = obtain_pad(sender, plaintext.size() * 8);
            cipher = xor_with_pad(plaintext, pad);
            stats_.pad_bits_consumed += plaintext.size() * 8;
        } else {
            cipher = stub_cipher(sender, sender, seq, plaintext);
        }
        Frame f;
        f.type = static_cast<uint8_t>(HsType::record);
        f.session_id = session_id_;
        f.payload.push_back(dir);
        put_u64be(f.payload, seq);
        f.payload.insert(f.payload.end(), cipher.begin(), cipher.end());
        f.mac = record_mac(sender, sender, dir, seq, cipher);
        Bytes raw = f.encode();
        wire_.log_record_frame(raw);
        send_seq_[idx(sender)] = seq + 1;
        stats_.plaintext_bytes_protected += plaintext.size();
        stats_.records_protected += 1;
        bytes_since_rekey_ += plaintext.size();
        records_since_rekey_ += 1;
        return raw;
    }

    // Verifies and decrypts a record at `receiver`. Rejects malformed frames,
    // MAC failures, and non-incrementing sequence numbers.
    Bytes unprotect(Side receiver, const Bytes& raw) {
        Frame f;
        uint8_t dir;
        uint64_t seq;
        Bytes cipher;
        try {
            f = Frame::decode(raw);
            ByteReader r(f.payload);
            dir = r.u8();
            seq = r.u64be();
            cipher = r.bytes(r.remaining());
        } catch (const Error&) {
            throw Error(Errc::mac_failure, "record frame corrupted");
        } catch (const std::out_of_range&) {
            throw Error(Errc::mac_failure, "record frame corrupted");
        }
        if (f.type != static_cast<uint8_t>(HsType::record))
            throw Error(Errc::protocol, "not a record frame");
        if (f.session_id != session_id_) throw Error(Errc::protocol, "record for wrong session");
        Side sender = other(receiver);
        if (dir != dir_byte(sender)) throw Error(Errc::protocol, "record direction mismatch");
        // the receiver verifies with its own key replica
        if (record_mac(receiver, sender, dir, seq, cipher) != f.mac)
            throw Error(Errc::mac_failure, "record MAC verification failed");
        uint64_t expect = recv_seq_[idx(receiver)];
        if (seq != expect)
            throw Error(Errc::replay, "record sequence " + std::to_string(seq) + ", expected " +
                                          std::to_string(expect));
        recv_seq_[idx(receiver)] = expect + 1;
        if (suite_.cipher == Cipher::one_time_pad) {
            auto& pads = pending_pads_[idx(receiver)];
            if (pads.empty()) throw Error(Errc::protocol, "no pad queued for record");
            BitVector pad = std::move(pads.front());
            pads.pop_front();
            return xor_with_pad(cipher, pad);
        }
        return stub_cipher(receiver, sender, seq, cipher);
    }

    // Fresh keying material on demand. Options A/B pull from the store and
    // re-derive; OTP mode grants the next reservation window instead of bulk
    // allocation and refreshes its record-MAC keys.
    void rekey() {
        ++rekey_count_;
        ++stats_.rekeys;
        try {
            rekey_inner();
        } catch (const FallbackEngaged&) {
            // fallback renegotiated the session; that is the rekey
            return;
        }
        note("rekey", "session " + std::to_string(session_id_) + " rekeyed (#" +
                          std::to_string(rekey_count_) + ") under " + suite_.name());
        records_since_rekey_ = 0;
        bytes_since_rekey_ = 0;
    }

private:
    void rekey_inner() {
        switch (suite_.kex) {
            case Kex::classical_stub: {
                // fresh toy exchange bound to the rekey counter
                keys_i_ = derive_for(classical_secret(Side::a));
                keys_r_ = derive_for(classical_secret(Side::b));
                break;
            }
            case Kex::quantum_shared_secret: {
                auto [a, b] = consume_with_policy(256);
                stats_.shared_secret_bits_consumed += 256;
                Bytes secret_i = a.pack();
                Bytes secret_r = b.pack();
                keys_i_ = derive_for(secret_i);
                keys_r_ = derive_for(secret_r);
                break;
            }
            case Kex::quantum_direct_keys: {
                pull_direct_keys();
                break;
            }
            case Kex::quantum_otp: {
                grant_otp_window();
                pull_otp_mac_keys();
                break;
            }
        }
    }

    static size_t idx(Side s) { return static_cast<size_t>(s); }
    static uint8_t dir_byte(Side sender) { return sender == Side::a ? 0 : 1; }

    void note(const std::string& cat, const std::string& msg) {
        if (log_) log_->record(clock_ ? clock_->now_ms() : 0, cat, msg);
    }

    // --- handshake -------------------------------------------------------

    void handshake(const std::vector<Ciphersuite>& proposals_in) {
        auto proposals = filter_proposals(proposals_in, conn_);
        if (proposals.empty())
            throw Error(Errc::negotiation_failure, "no proposable ciphersuite");

        publics_.random_i = rng_.bytes(32);
        publics_.nonce_i = rng_.bytes(16);
        publics_.random_r = rng_.bytes(32);
        publics_.nonce_r = rng_.bytes(16);
        dh_priv_i_ = rng_.next_u64() % (detail::kToyDhPrime - 2) + 1;
        dh_priv_r_ = rng_.next_u64() % (detail::kToyDhPrime - 2) + 1;

        // round 1: proposals + publics
        Bytes hello;
        hello.push_back(static_cast<uint8_t>(proposals.size()));
        for (const auto& s : proposals) s.encode(hello);
        hello.insert(hello.end(), publics_.random_i.begin(), publics_.random_i.end());
        hello.insert(hello.end(), publics_.nonce_i.begin(), publics_.nonce_i.end());
        hello.push_back(static_cast<uint8_t>(cfg_.flavor));
        put_u64be(hello, detail::powmod(detail::kToyDhGen, dh_priv_i_, detail::kToyDhPrime));
        if (cfg_.faults.tamper_client_hello_bit) {
            wire_.tamper_next(*cfg_.faults.tamper_client_hello_bit);
            cfg_.faults.tamper_client_hello_bit.reset();
        }
        Frame ch = wire_.transmit(Side::a, HsType::client_hello, session_id_, std::move(hello));

        // responder decodes its (possibly tampered) view and answers
        ByteReader chr(ch.payload);
        uint8_t nprop = chr.u8();
        std::vector<Ciphersuite> proposed;
        for (uint8_t i = 0; i < nprop; ++i) proposed.push_back(Ciphersuite::decode(chr));
        Bytes seen_random_i = chr.bytes(32);
        Bytes seen_nonce_i = chr.bytes(16);
        chr.u8();  // flavor echo
        uint64_t seen_dh_i = chr.u64be();

        Ciphersuite chosen = select_suite(proposed, cfg_.responder_preferences);

        Bytes sh;
        chosen.encode(sh);
        sh.insert(sh.end(), publics_.random_r.begin(), publics_.random_r.end());
        sh.insert(sh.end(), publics_.nonce_r.begin(), publics_.nonce_r.end());
        put_u64be(sh, detail::powmod(detail::kToyDhGen, dh_priv_r_, detail::kToyDhPrime));
        if (cfg_.faults.stall_responder) {
            cfg_.faults.stall_responder = false;
            wire_.stall_next();
        }
        if (cfg_.faults.tamper_server_hello_bit) {
            wire_.tamper_next(*cfg_.faults.tamper_server_hello_bit);
            cfg_.faults.tamper_server_hello_bit.reset();
        }
        Frame shf = wire_.transmit(Side::b, HsType::server_hello, session_id_, std::move(sh));

        ByteReader shr(shf.payload);
        suite_ = Ciphersuite::decode(shr);
        shr.bytes(32 + 16);
        dh_pub_r_seen_ = shr.u64be();
        dh_pub_i_seen_ = seen_dh_i;
        (void)seen_random_i;
        (void)seen_nonce_i;

        try {
            derive_initial_keys();
        } catch (const FallbackEngaged&) {
            // the policy already renegotiated this session onto the classical
            // suite, authentication included
            return;
        }
        authenticate();
        note("handshake", "session " + std::to_string(session_id_) + " established under " +
                              std::string(suite_.name()));
    }

    // Each side computes g^(ab) from its own private value and the public it
    // saw on the wire; the rekey counter is bound in so successive
    // derivations differ.
    Bytes classical_secret(Side s) const {
        uint64_t shared = s == Side::a
                              ? detail::powmod(dh_pub_r_seen_, dh_priv_i_, detail::kToyDhPrime)
                              : detail::powmod(dh_pub_i_seen_, dh_priv_r_, detail::kToyDhPrime);
        Bytes secret;
        put_u64be(secret, shared);
        put_u64be(secret, rekey_count_);
        return secret;
    }

    SessionKeys derive_for(const Bytes& secret) {
        Bytes skeyseed = derive_skeyseed(cfg_.flavor, secret, publics_);
        return expand_session_keys(skeyseed, publics_, suite_, cfg_.enc_key_len,
                                   cfg_.mac_key_len);
    }

    void derive_initial_keys() {
        switch (suite_.kex) {
            case Kex::classical_stub: {
                keys_i_ = derive_for(classical_secret(Side::a));
                keys_r_ = derive_for(classical_secret(Side::b));
                break;
            }
            case Kex::quantum_shared_secret: {
                // the quantum key replaces the computed shared secret
                auto [a, b] = consume_with_policy(256);
                stats_.shared_secret_bits_consumed += 256;
                keys_i_ = derive_for(a.pack());
                keys_r_ = derive_for(b.pack());
                break;
            }
            case Kex::quantum_direct_keys: {
                // keys come straight from the store; the prf chain remains for
                // peer authentication, keyed from the psk
                keys_i_.skeyseed = derive_skeyseed(cfg_.flavor, cfg_.psk, publics_);
                keys_r_.skeyseed = keys_i_.skeyseed;
                pull_direct_keys();
                break;
            }
            case Kex::quantum_otp: {
                keys_i_.skeyseed = derive_skeyseed(cfg_.flavor, cfg_.psk, publics_);
                keys_r_.skeyseed = keys_i_.skeyseed;
                grant_otp_window();
                pull_otp_mac_keys();
                break;
            }
        }
    }

    void pull_direct_keys() {
        size_t total_bits = 8 * (2 * cfg_.enc_key_len + 2 * cfg_.mac_key_len);
        auto [a, b] = consume_with_policy(total_bits);
        stats_.direct_key_bits_consumed += total_bits;
        auto split = [&](const BitVector& bits, SessionKeys& k) {
            Bytes packed = bits.pack();
            size_t off = 0;
            auto take = [&](size_t n) {
                Bytes out(packed.begin() + off, packed.begin() + off + n);
                off += n;
                return out;
            };
            k.enc_i2r = take(cfg_.enc_key_len);
            k.enc_r2i = take(cfg_.enc_key_len);
            k.mac_i2r = take(cfg_.mac_key_len);
            k.mac_r2i = take(cfg_.mac_key_len);
        };
        split(a, keys_i_);
        split(b, keys_r_);
    }

    void pull_otp_mac_keys() {
        size_t total_bits = 8 * 2 * cfg_.mac_key_len;
        auto [a, b] = consume_with_policy(total_bits);
        stats_.mac_key_bits_consumed += total_bits;
        auto split = [&](const BitVector& bits, SessionKeys& k) {
            Bytes packed = bits.pack();
            k.mac_i2r.assign(packed.begin(), packed.begin() + cfg_.mac_key_len);
            k.mac_r2i.assign(packed.begin() + cfg_.mac_key_len, packed.end());
            k.enc_i2r.clear();
            k.enc_r2i.clear();
        };
        split(a, keys_i_);
        split(b, keys_r_);
    }

    // OTP reservation window: a forward grant, not an allocation; pads are
    // consumed per record against the grant, so pad accounting stays exact.
    void grant_otp_window() {
        otp_window_left_ = cfg_.otp_window_bits;
    }

    void authenticate() {
        // each side MACs its own view of all previous messages plus the
        // peer's nonce, keyed from its psk and the derived skeyseed
        const Bytes& psk_i = cfg_.psk;
        const Bytes& psk_r = cfg_.responder_psk.empty() ? cfg_.psk : cfg_.responder_psk;
        auto auth_key = [&](const Bytes& psk, const char* label, const SessionKeys& k) {
            Bytes data = k.skeyseed;
            data.insert(data.end(), label, label + std::strlen(label));
            return prf(psk, data);
        };
        Bytes ti = wire_.view_bytes(Side::a);
        ti.insert(ti.end(), publics_.nonce_r.begin(), publics_.nonce_r.end());
        MacTag tag_i = mac_tag(auth_key(psk_i, "auth-init", keys_i_), ti);

        Frame fi = wire_.transmit(Side::a, HsType::auth_init, session_id_,
                                  Bytes(tag_i.begin(), tag_i.end()));

        // responder verifies against its own view with its own psk
        Bytes ti_resp = wire_.view_bytes(Side::b);
        // strip the auth frame the responder just received from its view
        ti_resp.resize(ti_resp.size() - fi.encode().size());
        ti_resp.insert(ti_resp.end(), publics_.nonce_r.begin(), publics_.nonce_r.end());
        MacTag want_i = mac_tag(auth_key(psk_r, "auth-init", keys_r_), ti_resp);
        Bytes got_i = fi.payload;
        if (!std::equal(want_i.begin(), want_i.end(), got_i.begin(), got_i.end()))
            throw Error(Errc::auth_failure, "initiator authentication failed");

        Bytes tr = wire_.view_bytes(Side::b);
        tr.insert(tr.end(), publics_.nonce_i.begin(), publics_.nonce_i.end());
        MacTag tag_r = mac_tag(auth_key(psk_r, "auth-resp", keys_r_), tr);
        Frame fr = wire_.transmit(Side::b, HsType::auth_resp, session_id_,
                                  Bytes(tag_r.begin(), tag_r.end()));

        Bytes tr_init = wire_.view_bytes(Side::a);
        tr_init.resize(tr_init.size() - fr.encode().size());
        tr_init.insert(tr_init.end(), publics_.nonce_i.begin(), publics_.nonce_i.end());
        MacTag want_r = mac_tag(auth_key(psk_i, "auth-resp", keys_i_), tr_init);
        if (!std::equal(want_r.begin(), want_r.end(), fr.payload.begin(), fr.payload.end()))
            throw Error(Errc::auth_failure, "responder authentication failed");
    }

    // --- record machinery --------------------------------------------------

    const SessionKeys& keyset(Side s) const { return s == Side::a ? keys_i_ : keys_r_; }

    // `acting` picks whose key replica performs the operation, so both
    // endpoints' derived keys are genuinely exercised.
    Bytes stub_cipher(Side acting, Side sender, uint64_t seq, const Bytes& input) {
        const SessionKeys& k = keyset(acting);
        const Bytes& key = sender == Side::a ? k.enc_i2r : k.enc_r2i;
        Bytes ctx;
        put_u64be(ctx, seq);
        ctx.push_back(dir_byte(sender));
        Bytes stream = prf_expand(key, "record-stream", ctx, input.size());
        Bytes out(input.size());
        for (size_t i = 0; i < input.size(); ++i) out[i] = input[i] ^ stream[i];
        return out;
    }

    MacTag record_mac(Side acting, Side sender, uint8_t dir, uint64_t seq, const Bytes& cipher) {
        const SessionKeys& k = keyset(acting);
        const Bytes& key = sender == Side::a ? k.mac_i2r : k.mac_r2i;
        Bytes data;
        data.push_back(dir);
        put_u64be(data, seq);
        put_u64be(data, session_id_);
        data.insert(data.end(), cipher.begin(), cipher.end());
        return mac_tag(key, data);
    }

    BitVector obtain_pad(Side sender, uint64_t nbits) {
        if (otp_window_left_ < nbits) {
            // next reservation window before more pad can be drawn
            grant_otp_window();
            if (cfg_.otp_window_bits < nbits) otp_window_left_ = nbits;  // oversized record
        }
        auto [a, b] = consume_with_policy(nbits);
        otp_window_left_ -= std::min<uint64_t>(otp_window_left_, nbits);
        // the receiver's replica waits in order for unprotect
        pending_pads_[idx(other(sender))].push_back(sender == Side::a ? std::move(b)
                                                                      : std::move(a));
        return sender == Side::a ? std::move(a) : std::move(b);
    }

    static Bytes xor_with_pad(const Bytes& data, const BitVector& pad) {
        if (pad.size() != data.size() * 8)
            throw Error(Errc::contract, "pad length mismatch");
        Bytes padded = pad.pack();
        Bytes out(data.size());
        for (size_t i = 0; i < data.size(); ++i) out[i] = data[i] ^ padded[i];
        return out;
    }

    // The exhaustion policy in one place: fail propagates the exact
    // shortfall, block waits in simulated time for a producer, fallback
    // renegotiates the whole session onto the classical suite.
    std::pair<BitVector, BitVector> consume_with_policy(uint64_t nbits) {
        try {
            return material_.consume_pair(nbits);
        } catch (const InsufficientMaterial& e) {
            switch (cfg_.policy.mode) {
                case ExhaustionPolicy::Mode::fail:
                    note("exhaustion", "session " + std::to_string(session_id_) +
                                           " failed: short " +
                                           std::to_string(e.shortfall_bits()) + " bits");
                    throw;
                case ExhaustionPolicy::Mode::block_with_timeout: {
                    note("exhaustion", "session " + std::to_string(session_id_) +
                                           " blocking for material");
                    if (material_.wait_for(nbits, cfg_.policy.timeout_ms))
                        return material_.consume_pair(nbits);
                    throw Error(Errc::timeout,
                                "keying material did not arrive within " +
                                    std::to_string(cfg_.policy.timeout_ms) + "ms");
                }
                case ExhaustionPolicy::Mode::fallback_classical: {
                    fallback_to_classical();
                    throw FallbackEngaged{};
                }
            }
            throw;  // unreachable
        }
    }

    struct FallbackEngaged {};

    void fallback_to_classical() {
        note("downgrade", "session " + std::to_string(session_id_) +
                              " falling back to classical-stub (quantum material exhausted)");
        stats_.downgraded = true;
        // renegotiate from scratch under the classical suite; the responder's
        // preference list still has to accept it, or this fails honestly
        handshake({suite_classical()});
        // sequence state restarts with the new association
        send_seq_[0] = send_seq_[1] = 0;
        recv_seq_[0] = recv_seq_[1] = 0;
        pending_pads_[0].clear();
        pending_pads_[1].clear();
    }

    void maybe_rekey() {
        bool due = false;
        if (cfg_.rekey_after_records > 0 && records_since_rekey_ >= cfg_.rekey_after_records)
            due = true;
        if (cfg_.rekey_after_bytes > 0 && bytes_since_rekey_ >= cfg_.rekey_after_bytes) due = true;
        if (due) rekey();
    }

public:
    // protect() with fallback handling: when the policy downgrades the
    // session mid-record, the record is re-protected under the new suite.
    Bytes protect_with_policy(Side sender, const Bytes& plaintext) {
        try {
            return protect(sender, plaintext);
        } catch (const FallbackEngaged&) {
            return protect(sender, plaintext);
        }
    }

private:
    uint64_t session_id_;
    MaterialSource& material_;
    HandshakeConfig cfg_;
    qnet::ConnectionInfo conn_;
    Rng rng_;
    SimClock* clock_;
    EventLog* log_;

    HandshakeWire wire_;
    Ciphersuite suite_;
    HandshakePublics publics_;
    SessionKeys keys_i_, keys_r_;
    uint64_t dh_priv_i_ = 0, dh_priv_r_ = 0;
    uint64_t dh_pub_i_seen_ = 0, dh_pub_r_seen_ = 0;
    uint64_t rekey_count_ = 0;

    uint64_t send_seq_[2] = {0, 0};
    uint64_t recv_seq_[2] = {0, 0};
    std::deque<BitVector> pending_pads_[2];
    uint64_t otp_window_left_ = 0;

    uint32_t records_since_rekey_ = 0;
    uint64_t bytes_since_rekey_ = 0;
    SessionStats stats_;
};

// ---------------------------------------------------------------------------
// Classical-channel MAC bootstrapping
// ---------------------------------------------------------------------------

constexpr const char* kMaintenanceStream = "maint";

// Solves the chicken-and-egg problem of protecting the key-growing exchange:
// MAC keys come from a psk-derived prf chain until the link's store has
// accumulated enough quantum material, then switch to consuming from a
// dedicated maintenance stream. If consumers later drain the store below the
// threshold, the provider falls back to the psk chain and says so.
class BootstrapMacProvider : public MacKeyProvider {
public:
    BootstrapMacProvider(LinkRuntime& link, Bytes psk, uint32_t threshold_bits = 4096,
                         EventLog* log = nullptr)
        : link_(link), psk_(std::move(psk)), threshold_bits_(threshold_bits), log_(log) {}

    MacKeyInfo key_for_session(uint64_t session_id) override {
        if (quantum_ready()) {
            auto [a, b] = link_.consume_pair(kMaintenanceStream, 256);
            if (!(a == b)) throw Error(Errc::desynchronized, "maintenance stream diverged");
            switch_source(MacKeySource::quantum, session_id);
            return {a.pack(), MacKeySource::quantum};
        }
        switch_source(MacKeySource::psk, session_id);
        Bytes ctx;
        put_u64be(ctx, session_id);
        return {prf(psk_, ctx), MacKeySource::psk};
    }

    MacKeySource current_source() const { return last_source_; }

private:
    bool quantum_ready() {
        if (link_.store_a.block_count() == 0) return false;
        if (!link_.store_a.has_stream(kMaintenanceStream)) link_.open_stream_pair(kMaintenanceStream);
        uint64_t total = std::min(link_.store_a.total_available(), link_.store_b.total_available());
        uint64_t maint = std::min(link_.store_a.available_bits(kMaintenanceStream),
                                  link_.store_b.available_bits(kMaintenanceStream));
        return total >= threshold_bits_ && maint >= 256;
    }

    void switch_source(MacKeySource src, uint64_t session_id) {
        if (src != last_source_ && log_)
            log_->record(link_.clock ? link_.clock->now_ms() : 0, "mac-provider",
                         "link " + link_.link_id + ": MAC key source now " +
                             mac_source_name(src) + " (session " + std::to_string(session_id) +
                             ")");
        last_source_ = src;
    }

    LinkRuntime& link_;
    Bytes psk_;
    uint32_t threshold_bits_;
    EventLog* log_;
    MacKeySource last_source_ = MacKeySource::psk;
};

inline std::shared_ptr<BootstrapMacProvider> bootstrap_bb84_protection(LinkRuntime& link,
                                                                       Bytes psk,
                                                                       uint32_t threshold_bits = 4096,
                                                                       EventLog* log = nullptr) {
    auto provider = std::make_shared<BootstrapMacProvider>(link, std::move(psk), threshold_bits,
                                                           log ? log : link.log);
    link.mac_provider = provider;
    return provider;
}

}  // namespace securechan
}  // namespace qkdsim

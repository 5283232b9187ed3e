#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/hash.hpp"

namespace qkdsim {
namespace keystore {

enum class BlockStatus { available, partially_consumed, exhausted, quarantined };

inline const char* block_status_name(BlockStatus s) {
    switch (s) {
        case BlockStatus::available: return "available";
        case BlockStatus::partially_consumed: return "partially-consumed";
        case BlockStatus::exhausted: return "exhausted";
        case BlockStatus::quarantined: return "quarantined";
    }
    return "unknown";
}

// Final-key block as produced by one successful link session. Bits are
// immutable once stored; a quarantined block is never served.
struct KeyBlock {
    uint64_t block_id = 0;
    std::string link_id;
    BitVector bits;
    BlockStatus status = BlockStatus::available;
    std::optional<std::string> owner;  // owning stream, fixed at assignment
};

// Audit record: which stream was served which bits. Tests assert globally
// that no (block, offset) is ever served twice.
struct ServedExtent {
    std::string stream_id;
    uint64_t block_id;
    uint32_t offset;
    uint32_t length;
};

struct StreamCursor {
    uint64_t block_id = 0;
    uint32_t bit_offset = 0;
};

struct DigestReport {
    MacTag digest{};
    uint64_t served_bits = 0;  // bits served since the last digest epoch reset
};

enum class SyncStatus { ok, desynchronized };

// One endpoint's key database for one link. Both ends of a link hold a
// replica and apply the same operation sequence; every rule here (block
// claiming, cursor movement, digests) is a deterministic function of that
// sequence so the replicas agree without extra negotiation.
//
// Allocation: appended blocks sit unowned until a stream needs material, at
// which point the consuming stream claims the lowest unowned block. A claim
// is permanent. Allocation therefore follows consumption order, mirrored on
// both endpoints, and a stream opened after key production can still reach
// the material nothing else has claimed.
//
// Thread safety: one store-wide mutex. Consumers on distinct streams may run
// concurrently from different threads; operations on one stream serialize on
// the same lock, and the producer (session append) may interleave freely.
class KeyStore {
public:
    explicit KeyStore(std::string link_id = "link", uint32_t sync_interval_bits = 4096)
        : link_id_(std::move(link_id)), sync_interval_bits_(sync_interval_bits) {}

    KeyStore(const KeyStore&) = delete;
    KeyStore& operator=(const KeyStore&) = delete;

    const std::string& link_id() const { return link_id_; }

    // Appends a finished key block with a gap-free increasing id.
    uint64_t append_block(BitVector bits) {
        std::lock_guard lk(mu_);
        uint64_t id = blocks_.size();
        blocks_.push_back({id, link_id_, std::move(bits), BlockStatus::available, std::nullopt});
        return id;
    }

    // Creates a stream positioned at the lowest unallocated material.
    void open_stream(const std::string& stream_id) {
        std::lock_guard lk(mu_);
        if (streams_.count(stream_id))
            throw Error(Errc::contract, "stream already open: " + stream_id);
        StreamState st;
        st.digest_ctx = fresh_digest_ctx(stream_id);
        streams_.emplace(stream_id, std::move(st));
    }

    bool has_stream(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        return streams_.count(stream_id) != 0;
    }

    // Serves exactly nbits in block order, or throws InsufficientMaterial with
    // the shortfall and serves nothing. Served bits are destroyed: they are
    // never handed to any stream again.
    BitVector consume(const std::string& stream_id, uint64_t nbits) {
        std::lock_guard lk(mu_);
        StreamState& st = stream(stream_id);
        if (st.desynced)
            throw Error(Errc::desynchronized, "stream " + stream_id + " needs recovery");
        if (nbits == 0) return BitVector();
        uint64_t avail = available_locked(st);
        if (avail < nbits)
            throw InsufficientMaterial(nbits - avail,
                                       "stream " + stream_id + " has " + std::to_string(avail) +
                                           " of " + std::to_string(nbits) + " bits");
        BitVector out;
        out.reserve(nbits);
        while (out.size() < nbits) {
            if (st.pos == st.assigned.size() && !claim_next(stream_id, st))
                throw Error(Errc::protocol, "consume walked past checked availability");
            KeyBlock& blk = blocks_[st.assigned[st.pos]];
            if (blk.status == BlockStatus::quarantined)
                throw Error(Errc::desynchronized, "cursor reached quarantined block");
            uint32_t take = static_cast<uint32_t>(
                std::min<uint64_t>(nbits - out.size(), blk.bits.size() - st.offset));
            served_log_.push_back({stream_id, blk.block_id, st.offset, take});
            for (uint32_t i = 0; i < take; ++i) {
                uint8_t bit = blk.bits[st.offset + i];
                out.push_back(bit);
                absorb_bit(st, bit);
            }
            st.offset += take;
            if (st.offset == blk.bits.size()) {
                blk.status = BlockStatus::exhausted;
                ++st.pos;
                st.offset = 0;
            } else {
                blk.status = BlockStatus::partially_consumed;
            }
        }
        st.served_total += nbits;
        st.served_epoch += nbits;
        st.since_sync += nbits;
        return out;
    }

    uint64_t available_bits(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        return available_locked(stream(stream_id));
    }

    // Unserved, unquarantined bits in the whole store (claimed or not).
    uint64_t total_available() const {
        std::lock_guard lk(mu_);
        uint64_t sum = 0;
        for (const auto& [sid, st] : streams_) sum += claimed_remaining(st);
        sum += unclaimed_bits();
        return sum;
    }

    StreamCursor cursor(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        const StreamState& st = stream(stream_id);
        if (st.pos < st.assigned.size()) return {st.assigned[st.pos], st.offset};
        for (uint64_t b = next_unclaimed_hint_; b < blocks_.size(); ++b)
            if (!blocks_[b].owner) return {b, 0};  // next claimable block
        return {blocks_.size(), 0};  // next block to arrive
    }

    DigestReport digest_report(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        const StreamState& st = stream(stream_id);
        Sha256 ctx = st.digest_ctx;
        // Fold in any partial byte plus the epoch bit count so the digest is a
        // function of the exact bit sequence, independent of consume chunking.
        if (st.pending_count > 0) {
            uint8_t tail = static_cast<uint8_t>(st.pending_byte << (8 - st.pending_count));
            ctx.update(std::span<const uint8_t>(&tail, 1));
        }
        ctx.update_u64be(st.served_epoch);
        auto full = ctx.finalize();
        DigestReport rep;
        std::copy_n(full.begin(), rep.digest.size(), rep.digest.begin());
        rep.served_bits = st.served_epoch;
        return rep;
    }

    bool sync_due(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        return stream(stream_id).since_sync >= sync_interval_bits_;
    }

    uint32_t sync_interval_bits() const { return sync_interval_bits_; }

    // Compares the local digest with the peer's. A mismatch is a status, not a
    // fault: the stream is marked desynchronized and consume refuses to serve
    // until recover() runs.
    SyncStatus sync_check(const std::string& stream_id, const DigestReport& remote) {
        DigestReport local = digest_report(stream_id);
        std::lock_guard lk(mu_);
        StreamState& st = stream(stream_id);
        st.since_sync = 0;
        if (local.digest == remote.digest && local.served_bits == remote.served_bits)
            return SyncStatus::ok;
        st.desynced = true;
        return SyncStatus::desynchronized;
    }

    bool is_desynchronized(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        return stream(stream_id).desynced;
    }

    // Re-agreement point after a detected desync: quarantine the rest of the
    // current block, resume at the next block boundary, restart the digest
    // epoch. Both endpoints run this independently; as long as their cursors
    // sit in the same block they land on the same boundary.
    void recover(const std::string& stream_id) {
        std::lock_guard lk(mu_);
        StreamState& st = stream(stream_id);
        if (!st.desynced)
            throw Error(Errc::contract, "recover on a synchronized stream");
        if (st.pos == st.assigned.size() && !claim_next(stream_id, st))
            throw InsufficientMaterial(1, "recover: no current block on stream " + stream_id);
        // a next block must exist to resume at
        if (st.pos + 1 == st.assigned.size() && unclaimed_bits() == 0)
            throw InsufficientMaterial(1, "recover: no block after the current one on stream " +
                                              stream_id);
        KeyBlock& blk = blocks_[st.assigned[st.pos]];
        blk.status = BlockStatus::quarantined;
        quarantined_bits_ += blk.bits.size() - st.offset;
        ++st.pos;
        st.offset = 0;
        st.digest_ctx = fresh_digest_ctx(stream_id);
        st.pending_byte = 0;
        st.pending_count = 0;
        st.served_epoch = 0;
        st.since_sync = 0;
        st.desynced = false;
    }

    // Fault hook: silently advances the cursor as if bits had been served,
    // without touching the digest. Models a lost allocation on one endpoint.
    void inject_cursor_skew(const std::string& stream_id, uint64_t nbits) {
        std::lock_guard lk(mu_);
        StreamState& st = stream(stream_id);
        uint64_t avail = available_locked(st);
        if (avail < nbits) throw Error(Errc::contract, "skew beyond available material");
        uint64_t left = nbits;
        while (left > 0) {
            if (st.pos == st.assigned.size() && !claim_next(stream_id, st))
                throw Error(Errc::protocol, "skew walked past checked availability");
            KeyBlock& blk = blocks_[st.assigned[st.pos]];
            uint32_t take =
                static_cast<uint32_t>(std::min<uint64_t>(left, blk.bits.size() - st.offset));
            served_log_.push_back({"!skew:" + stream_id, blk.block_id, st.offset, take});
            st.offset += take;
            left -= take;
            if (st.offset == blk.bits.size()) {
                blk.status = BlockStatus::exhausted;
                ++st.pos;
                st.offset = 0;
            } else {
                blk.status = BlockStatus::partially_consumed;
            }
        }
    }

    uint64_t served_bits_total(const std::string& stream_id) const {
        std::lock_guard lk(mu_);
        return stream(stream_id).served_total;
    }

    uint64_t quarantined_bits() const {
        std::lock_guard lk(mu_);
        return quarantined_bits_;
    }

    std::vector<std::string> open_streams() const {
        std::lock_guard lk(mu_);
        std::vector<std::string> ids;
        for (const auto& [sid, st] : streams_) ids.push_back(sid);
        return ids;
    }

    size_t block_count() const {
        std::lock_guard lk(mu_);
        return blocks_.size();
    }

    KeyBlock block_snapshot(uint64_t block_id) const {
        std::lock_guard lk(mu_);
        if (block_id >= blocks_.size()) throw Error(Errc::contract, "no such block");
        return blocks_[block_id];
    }

    std::vector<ServedExtent> served_log() const {
        std::lock_guard lk(mu_);
        return served_log_;
    }

    // Append-only block file: per block, 8-byte block id, 4-byte bit length,
    // packed bits, 16-byte integrity tag. Lets scenario runs checkpoint the
    // produced material and resume later. Stream state is not persisted.
    void save_blocks(std::ostream& os) const {
        std::lock_guard lk(mu_);
        Bytes key = derive_key_bytes("block-file", link_id_);
        for (const auto& b : blocks_) {
            Bytes rec;
            put_u64be(rec, b.block_id);
            put_u32be(rec, static_cast<uint32_t>(b.bits.size()));
            Bytes packed = b.bits.pack();
            rec.insert(rec.end(), packed.begin(), packed.end());
            MacTag tag = mac_tag(key, rec);
            os.write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
            os.write(reinterpret_cast<const char*>(tag.data()), std::streamsize(tag.size()));
        }
    }

    void save_blocks_file(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(Errc::parse, "cannot write block file " + path);
        save_blocks(f);
    }

    void load_blocks(std::istream& is) {
        std::lock_guard lk(mu_);
        if (!blocks_.empty()) throw Error(Errc::contract, "load into nonempty store");
        Bytes key = derive_key_bytes("block-file", link_id_);
        while (true) {
            uint8_t hdr[12];
            is.read(reinterpret_cast<char*>(hdr), 12);
            if (is.gcount() == 0 && is.eof()) break;
            if (is.gcount() != 12) throw Error(Errc::parse, "truncated block file header");
            ByteReader r(std::span<const uint8_t>(hdr, 12));
            uint64_t id = r.u64be();
            uint32_t nbits = r.u32be();
            size_t nbytes = (nbits + 7) / 8;
            Bytes packed(nbytes);
            is.read(reinterpret_cast<char*>(packed.data()), std::streamsize(nbytes));
            MacTag tag;
            is.read(reinterpret_cast<char*>(tag.data()), std::streamsize(tag.size()));
            if (!is) throw Error(Errc::parse, "truncated block file record");
            Bytes rec;
            put_u64be(rec, id);
            put_u32be(rec, nbits);
            rec.insert(rec.end(), packed.begin(), packed.end());
            if (mac_tag(key, rec) != tag)
                throw Error(Errc::mac_failure, "block file integrity tag mismatch");
            if (id != blocks_.size())
                throw Error(Errc::parse, "block ids not gap-free in block file");
            blocks_.push_back({id, link_id_, BitVector::unpack(packed, nbits),
                               BlockStatus::available, std::nullopt});
        }
    }

    void load_blocks_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw Error(Errc::parse, "cannot read block file " + path);
        load_blocks(f);
    }

private:
    struct StreamState {
        std::vector<uint64_t> assigned;  // block ids, ascending
        size_t pos = 0;                  // index into assigned
        uint32_t offset = 0;             // bit offset within current block
        Sha256 digest_ctx;
        uint8_t pending_byte = 0;
        uint8_t pending_count = 0;
        uint64_t served_total = 0;
        uint64_t served_epoch = 0;
        uint64_t since_sync = 0;
        bool desynced = false;
    };

    StreamState& stream(const std::string& id) {
        auto it = streams_.find(id);
        if (it == streams_.end()) throw Error(Errc::contract, "no such stream: " + id);
        return it->second;
    }
    const StreamState& stream(const std::string& id) const {
        auto it = streams_.find(id);
        if (it == streams_.end()) throw Error(Errc::contract, "no such stream: " + id);
        return it->second;
    }

    Sha256 fresh_digest_ctx(const std::string& stream_id) const {
        Sha256 ctx;
        Bytes key = derive_key_bytes("stream-digest", link_id_, stream_id);
        ctx.update(key);
        return ctx;
    }

    void absorb_bit(StreamState& st, uint8_t bit) {
        st.pending_byte = static_cast<uint8_t>(st.pending_byte << 1 | (bit & 1));
        if (++st.pending_count == 8) {
            ctx_update_byte(st);
        }
    }

    void ctx_update_byte(StreamState& st) {
        st.digest_ctx.update(std::span<const uint8_t>(&st.pending_byte, 1));
        st.pending_byte = 0;
        st.pending_count = 0;
    }

    uint64_t claimed_remaining(const StreamState& st) const {
        uint64_t sum = 0;
        for (size_t i = st.pos; i < st.assigned.size(); ++i) {
            const KeyBlock& b = blocks_[st.assigned[i]];
            if (b.status == BlockStatus::quarantined) continue;
            sum += b.bits.size() - (i == st.pos ? st.offset : 0);
        }
        return sum;
    }

    uint64_t unclaimed_bits() const {
        uint64_t sum = 0;
        for (uint64_t b = next_unclaimed_hint_; b < blocks_.size(); ++b)
            if (!blocks_[b].owner) sum += blocks_[b].bits.size();
        return sum;
    }

    // What this stream can serve: its claimed remainder plus everything still
    // unowned (claimable on demand).
    uint64_t available_locked(const StreamState& st) const {
        return claimed_remaining(st) + unclaimed_bits();
    }

    // Claims the lowest unowned block for the stream. Permanent.
    bool claim_next(const std::string& stream_id, StreamState& st) {
        for (uint64_t b = next_unclaimed_hint_; b < blocks_.size(); ++b) {
            if (blocks_[b].owner) continue;
            blocks_[b].owner = stream_id;
            st.assigned.push_back(b);
            if (b == next_unclaimed_hint_) ++next_unclaimed_hint_;
            return true;
        }
        return false;
    }

    mutable std::mutex mu_;
    std::string link_id_;
    uint32_t sync_interval_bits_;
    std::vector<KeyBlock> blocks_;
    std::map<std::string, StreamState> streams_;
    std::vector<ServedExtent> served_log_;
    uint64_t quarantined_bits_ = 0;
    uint64_t next_unclaimed_hint_ = 0;
};

}  // namespace keystore
}  // namespace qkdsim

#pragma once

#include <memory>
#include <string>
#include <utility>

#include "qkdsim/errors.hpp"
#include "qkdsim/keystore.hpp"
#include "qkdsim/message.hpp"
#include "qkdsim/qchannel.hpp"
#include "qkdsim/sim_clock.hpp"

namespace qkdsim {

// Everything live about one QKD link: the classical channel between its two
// endpoints, both endpoints' key-store replicas, and the MAC-key provider
// protecting the classical traffic. Side::a transmits photons (Alice),
// Side::b receives (Bob).
struct LinkRuntime {
    std::string link_id;
    std::string node_a, node_b;
    SimClock* clock = nullptr;
    EventLog* log = nullptr;
    ClassicalChannel channel;
    keystore::KeyStore store_a;
    keystore::KeyStore store_b;
    std::shared_ptr<MacKeyProvider> mac_provider;
    qchannel::ChannelParams channel_params;
    bool operational = true;
    bool switched = false;
    uint32_t switch_delay_ms = 0;
    uint64_t next_session_id = 1;

    LinkRuntime(std::string id, SimClock* clk, EventLog* lg, std::string na = "a",
                std::string nb = "b")
        : link_id(id),
          node_a(std::move(na)),
          node_b(std::move(nb)),
          clock(clk),
          log(lg),
          channel(clk, lg, id),
          store_a(id),
          store_b(id),
          mac_provider(std::make_shared<StaticMacKeyProvider>(derive_key_bytes("link-psk", id))) {}

    keystore::KeyStore& store(Side s) { return s == Side::a ? store_a : store_b; }
    keystore::KeyStore& store_for_node(const std::string& node) {
        if (node == node_a) return store_a;
        if (node == node_b) return store_b;
        throw Error(Errc::contract, "node " + node + " is not an endpoint of " + link_id);
    }

    void open_stream_pair(const std::string& stream_id) {
        store_a.open_stream(stream_id);
        store_b.open_stream(stream_id);
    }

    void append_pair(const BitVector& bits) {
        store_a.append_block(bits);
        store_b.append_block(bits);
    }

    // Serves the same bits from both replicas. Availability is checked on
    // both sides first so a shortfall consumes nothing anywhere.
    std::pair<BitVector, BitVector> consume_pair(const std::string& stream_id, uint64_t nbits) {
        uint64_t avail =
            std::min(store_a.available_bits(stream_id), store_b.available_bits(stream_id));
        if (avail < nbits)
            throw InsufficientMaterial(nbits - avail, "link " + link_id + " stream " + stream_id);
        BitVector a = store_a.consume(stream_id, nbits);
        BitVector b = store_b.consume(stream_id, nbits);
        return {std::move(a), std::move(b)};
    }

    void note(const std::string& category, const std::string& message) {
        if (log) log->record(clock ? clock->now_ms() : 0, category, message);
    }
};

}  // namespace qkdsim

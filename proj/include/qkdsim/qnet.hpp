#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/bits.hpp"
#include "qkdsim/errors.hpp"
#include "qkdsim/link.hpp"
#include "qkdsim/message.hpp"

namespace qkdsim {
namespace qnet {

struct NodeInfo {
    std::string id;
    bool trusted = true;
};

struct LinkInfo {
    std::string id;
    std::string node_a, node_b;
    bool operational = true;
    bool switched = false;        // circuit-switched links pay a setup delay
    uint32_t switch_delay_ms = 0;

    bool connects(const std::string& n) const { return node_a == n || node_b == n; }
    const std::string& peer_of(const std::string& n) const {
        return n == node_a ? node_b : node_a;
    }
};

// Static per-scenario routing view of the QKD sub-network.
class Topology {
public:
    void add_node(const std::string& id, bool trusted) {
        if (nodes_.count(id)) throw Error(Errc::parse, "duplicate node " + id);
        nodes_[id] = {id, trusted};
    }

    void add_link(const LinkInfo& link) {
        if (!nodes_.count(link.node_a) || !nodes_.count(link.node_b))
            throw Error(Errc::parse, "link " + link.id + " references unknown node");
        if (links_.count(link.id)) throw Error(Errc::parse, "duplicate link " + link.id);
        for (const auto& [id, l] : links_) {
            bool same_pair = (l.node_a == link.node_a && l.node_b == link.node_b) ||
                             (l.node_a == link.node_b && l.node_b == link.node_a);
            if (same_pair)
                throw Error(Errc::parse, "parallel link between " + link.node_a + " and " +
                                             link.node_b);
        }
        links_[link.id] = link;
    }

    bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
    const NodeInfo& node(const std::string& id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw Error(Errc::contract, "unknown node " + id);
        return it->second;
    }

    bool has_link(const std::string& id) const { return links_.count(id) != 0; }
    const LinkInfo& link(const std::string& id) const {
        auto it = links_.find(id);
        if (it == links_.end()) throw Error(Errc::contract, "unknown link " + id);
        return it->second;
    }
    LinkInfo& link_mutable(const std::string& id) {
        auto it = links_.find(id);
        if (it == links_.end()) throw Error(Errc::contract, "unknown link " + id);
        return it->second;
    }

    const std::map<std::string, NodeInfo>& nodes() const { return nodes_; }
    const std::map<std::string, LinkInfo>& links() const { return links_; }

    // Line format, '#' comments:
    //   node <id> trusted|untrusted
    //   link <id> <nodeA> <nodeB> up|down static|switched <delay_s>
    static Topology parse(std::istream& in) {
        Topology topo;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string kind;
            if (!(ls >> kind)) continue;
            auto fail = [&](const std::string& why) -> Error {
                return Error(Errc::parse,
                             "topology line " + std::to_string(lineno) + ": " + why);
            };
            if (kind == "node") {
                std::string id, trust;
                if (!(ls >> id >> trust)) throw fail("expected: node <id> trusted|untrusted");
                if (trust != "trusted" && trust != "untrusted")
                    throw fail("bad trust flag '" + trust + "'");
                topo.add_node(id, trust == "trusted");
            } else if (kind == "link") {
                LinkInfo l;
                std::string state, mode;
                double delay_s = 0.0;
                if (!(ls >> l.id >> l.node_a >> l.node_b >> state >> mode >> delay_s))
                    throw fail("expected: link <id> <a> <b> up|down static|switched <delay_s>");
                if (state != "up" && state != "down") throw fail("bad link state '" + state + "'");
                if (mode != "static" && mode != "switched") throw fail("bad link mode '" + mode + "'");
                if (delay_s < 0) throw fail("negative switch delay");
                l.operational = (state == "up");
                l.switched = (mode == "switched");
                l.switch_delay_ms = static_cast<uint32_t>(delay_s * 1000.0 + 0.5);
                topo.add_link(l);
            } else {
                throw fail("unknown directive '" + kind + "'");
            }
        }
        return topo;
    }

private:
    std::map<std::string, NodeInfo> nodes_;
    std::map<std::string, LinkInfo> links_;
};

enum class PathKind { direct, multi_hop };

struct Path {
    std::vector<std::string> hops;           // link ids, source to destination
    std::vector<std::string> intermediates;  // nodes between the endpoints
    PathKind kind = PathKind::direct;
};

// Fewest-hop route over operational links; ties broken by the
// lexicographically smallest link-id sequence so routing is reproducible
// under any iteration order.
inline std::optional<Path> route(const Topology& topo, const std::string& src,
                                 const std::string& dst) {
    if (!topo.has_node(src)) throw Error(Errc::contract, "unknown node " + src);
    if (!topo.has_node(dst)) throw Error(Errc::contract, "unknown node " + dst);
    if (src == dst) throw Error(Errc::contract, "route: src equals dst");

    struct Candidate {
        std::vector<std::string> links;
        std::vector<std::string> nodes;  // visited nodes, src first
    };
    auto better = [](const Candidate& x, const Candidate& y) {
        if (x.links.size() != y.links.size()) return x.links.size() < y.links.size();
        return x.links < y.links;
    };

    // Relaxation to fixpoint; graphs here are scenario-sized.
    std::map<std::string, Candidate> best;
    best[src] = {{}, {src}};
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [lid, l] : topo.links()) {
            if (!l.operational) continue;
            for (const auto& [from, to] :
                 {std::pair{l.node_a, l.node_b}, std::pair{l.node_b, l.node_a}}) {
                auto it = best.find(from);
                if (it == best.end()) continue;
                if (std::find(it->second.nodes.begin(), it->second.nodes.end(), to) !=
                    it->second.nodes.end())
                    continue;  // no revisits
                Candidate cand = it->second;
                cand.links.push_back(lid);
                cand.nodes.push_back(to);
                auto cur = best.find(to);
                if (cur == best.end() || better(cand, cur->second)) {
                    best[to] = std::move(cand);
                    changed = true;
                }
            }
        }
    }
    auto it = best.find(dst);
    if (it == best.end()) return std::nullopt;
    Path p;
    p.hops = it->second.links;
    p.kind = p.hops.size() == 1 ? PathKind::direct : PathKind::multi_hop;
    p.intermediates.assign(it->second.nodes.begin() + 1, it->second.nodes.end() - 1);
    return p;
}

struct ConnectionInfo {
    bool possible = false;
    PathKind kind = PathKind::direct;
    std::vector<std::string> intermediates;
    bool requires_trust = false;       // multi-hop paths expose key to intermediates
    uint32_t setup_delay_ms = 0;       // summed switch delay of switched links
};

inline ConnectionInfo connection_info(const Topology& topo, const std::string& src,
                                      const std::string& dst) {
    ConnectionInfo info;
    auto p = route(topo, src, dst);
    if (!p) return info;
    info.possible = true;
    info.kind = p->kind;
    info.intermediates = p->intermediates;
    info.requires_trust = !p->intermediates.empty();
    for (const auto& lid : p->hops) {
        const LinkInfo& l = topo.link(lid);
        if (l.switched) info.setup_delay_ms += l.switch_delay_ms;
    }
    return info;
}

// The live network: static topology plus per-link runtime state, shared clock
// and event log. Built by the scenario runner; tests build small ones by hand.
struct Network {
    Topology topo;
    std::map<std::string, std::shared_ptr<LinkRuntime>> links;
    SimClock clock;
    EventLog log;
    uint64_t next_relay_id = 1;

    LinkRuntime& link(const std::string& id) {
        auto it = links.find(id);
        if (it == links.end()) throw Error(Errc::contract, "no runtime for link " + id);
        return *it->second;
    }

    std::shared_ptr<LinkRuntime> add_link_runtime(const LinkInfo& info) {
        auto rt = std::make_shared<LinkRuntime>(info.id, &clock, &log, info.node_a, info.node_b);
        rt->operational = info.operational;
        rt->switched = info.switched;
        rt->switch_delay_ms = info.switch_delay_ms;
        links[info.id] = rt;
        return rt;
    }
};

constexpr const char* kRelayStream = "relay";

struct RelayResult {
    uint64_t relay_id = 0;
    Path path;
    BitVector source_copy;                            // key as held at src
    BitVector delivered;                              // key as it arrived at dst
    std::map<std::string, uint64_t> consumed_bits;    // per link id
    uint64_t consumed_total = 0;
};

// Hop-by-hop one-time-pad key transport. The end-to-end key is
// drawn from the first link's store (it exists only at the first two nodes);
// each further hop consumes fresh link key as pad, XORs, and sends the result
// as an integrity-protected relay-key message. Accounting rule: serving the
// key itself costs n bits on the first link, and each of the remaining h-1
// hops costs n bits of pad, so a successful relay consumes n*h bits in total
// of which n*(h-1) is relay overhead.
inline RelayResult relay_key(Network& net, const std::string& src, const std::string& dst,
                             uint32_t nbits, const std::string& stream_id = kRelayStream) {
    if (nbits == 0) throw Error(Errc::contract, "relay of zero bits");
    auto path = route(net.topo, src, dst);
    if (!path) throw Error(Errc::no_route, "no operational path " + src + " -> " + dst);

    // Trust check happens before any consumption.
    for (const auto& n : path->intermediates)
        if (!net.topo.node(n).trusted)
            throw Error(Errc::untrusted_path, "intermediate node " + n + " is untrusted");

    RelayResult res;
    res.relay_id = net.next_relay_id++;
    res.path = *path;

    for (const auto& lid : path->hops) {
        LinkRuntime& l = net.link(lid);
        if (!l.store_a.has_stream(stream_id)) l.open_stream_pair(stream_id);
    }

    auto burn_note = [&](const std::string& upto_link) {
        std::string burned;
        for (const auto& [lid, bits] : res.consumed_bits)
            burned += lid + "=" + std::to_string(bits) + " ";
        net.log.record(net.clock.now_ms(), "relay",
                       "relay " + std::to_string(res.relay_id) + " aborted at " + upto_link +
                           "; burned bits not refunded: " + burned);
    };

    // Source the end-to-end key from the first link.
    LinkRuntime& first = net.link(path->hops.front());
    BitVector carried;
    try {
        auto [ka, kb] = first.consume_pair(stream_id, nbits);
        if (!(ka == kb)) throw Error(Errc::desynchronized, "first-link replicas disagree");
        res.source_copy = std::move(ka);
        carried = std::move(kb);  // the downstream endpoint's copy travels on
        res.consumed_bits[first.link_id] += nbits;
        res.consumed_total += nbits;
    } catch (const InsufficientMaterial&) {
        burn_note(first.link_id);
        throw;
    }

    for (size_t h = 1; h < path->hops.size(); ++h) {
        LinkRuntime& l = net.link(path->hops[h]);
        try {
            auto [pad_near, pad_far] = l.consume_pair(stream_id, nbits);
            res.consumed_bits[l.link_id] += nbits;
            res.consumed_total += nbits;

            // near end encrypts, far end decrypts; bytes cross the link's
            // authenticated classical channel
            BitVector cipher = carried.xored(pad_near);
            Bytes payload;
            put_u32be(payload, nbits);
            Bytes packed = cipher.pack();
            payload.insert(payload.end(), packed.begin(), packed.end());
            // relay traffic gets its own session-id space on the link channel
            uint64_t relay_session = 0x52454C4159000000ULL ^ res.relay_id;  // "RELAY" prefix
            MacKeyInfo mac = l.mac_provider->key_for_session(relay_session);
            l.channel.drain();
            l.channel.set_mac_key(mac.key);
            l.channel.send(Side::a, MsgType::relay_key, relay_session, payload);
            Frame f = l.channel.recv(Side::b, MsgType::relay_key, relay_session);
            ByteReader r(f.payload);
            uint32_t got = r.u32be();
            BitVector cipher_rx = BitVector::unpack(r.bytes(r.remaining()), got);
            carried = cipher_rx.xored(pad_far);
        } catch (const InsufficientMaterial&) {
            burn_note(l.link_id);
            throw;
        }
    }

    res.delivered = std::move(carried);
    net.log.record(net.clock.now_ms(), "relay",
                   "relay " + std::to_string(res.relay_id) + " delivered " +
                       std::to_string(nbits) + " bits " + src + " -> " + dst + " over " +
                       std::to_string(path->hops.size()) + " hops");
    return res;
}

}  // namespace qnet
}  // namespace qkdsim

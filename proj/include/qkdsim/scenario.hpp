#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/bb84.hpp"
#include "qkdsim/qnet.hpp"
#include "qkdsim/securechan.hpp"

namespace qkdsim {
namespace scenario {

// One script line. Verbs: qkd-session, open-stream, consume, relay,
// handshake, send-record, inject-fault, wait; `at <ms> <command>` defers any
// of them to a simulated time.
struct Command {
    std::string verb;
    std::vector<std::string> args;           // positional tokens
    std::map<std::string, std::string> kv;   // key=value tokens
    std::string expect = "ok";
    uint64_t at_ms = 0;
    bool deferred = false;
    int lineno = 0;

    const std::string& kv_or(const std::string& key, const std::string& dflt) const {
        auto it = kv.find(key);
        return it == kv.end() ? dflt : it->second;
    }
};

struct Scenario {
    std::string topology_path;
    std::map<std::string, qchannel::ChannelParams> channel;  // per link id
    std::vector<Command> commands;
    uint64_t seed = 0;
    std::string out_dir;
    std::string name;  // basename, for the report header

    static Scenario parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw Error(Errc::parse, "cannot open scenario " + path);
        namespace fs = std::filesystem;
        Scenario s = parse(f, fs::path(path).parent_path().string());
        s.name = fs::path(path).filename().string();
        return s;
    }

    static Scenario parse(std::istream& in, const std::string& base_dir) {
        Scenario s;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::vector<std::string> tokens;
            std::string tok;
            while (ls >> tok) tokens.push_back(tok);
            if (tokens.empty()) continue;
            auto fail = [&](const std::string& why) -> Error {
                return Error(Errc::parse, "scenario line " + std::to_string(lineno) + ": " + why);
            };

            size_t i = 0;
            uint64_t at_ms = 0;
            bool deferred = false;
            if (tokens[0] == "at") {
                if (tokens.size() < 3) throw fail("expected: at <ms> <command>");
                at_ms = std::stoull(tokens[1]);
                deferred = true;
                i = 2;
            }
            const std::string& verb = tokens[i];

            if (!deferred && verb == "topology") {
                if (tokens.size() != i + 2) throw fail("expected: topology <path>");
                namespace fs = std::filesystem;
                fs::path p(tokens[i + 1]);
                s.topology_path = p.is_absolute() || base_dir.empty()
                                      ? p.string()
                                      : (fs::path(base_dir) / p).string();
                continue;
            }
            if (!deferred && verb == "seed") {
                if (tokens.size() != i + 2) throw fail("expected: seed <N>");
                s.seed = std::stoull(tokens[i + 1]);
                continue;
            }
            if (!deferred && verb == "out") {
                if (tokens.size() != i + 2) throw fail("expected: out <dir>");
                s.out_dir = tokens[i + 1];
                continue;
            }
            if (!deferred && verb == "channel") {
                if (tokens.size() < i + 2) throw fail("expected: channel <link> [loss=f flip=f eve=f]");
                qchannel::ChannelParams p;
                for (size_t j = i + 2; j < tokens.size(); ++j) {
                    auto eq = tokens[j].find('=');
                    if (eq == std::string::npos) throw fail("bad channel param " + tokens[j]);
                    std::string key = tokens[j].substr(0, eq);
                    double v = std::stod(tokens[j].substr(eq + 1));
                    if (key == "loss")
                        p.loss_prob = v;
                    else if (key == "flip")
                        p.flip_prob = v;
                    else if (key == "eve")
                        p.eve_prob = v;
                    else
                        throw fail("unknown channel param " + key);
                }
                p.validate();
                s.channel[tokens[i + 1]] = p;
                continue;
            }

            static const std::vector<std::string> verbs = {
                "qkd-session", "open-stream", "consume", "relay",
                "handshake",   "send-record", "inject-fault", "wait"};
            if (std::find(verbs.begin(), verbs.end(), verb) == verbs.end())
                throw fail("unknown command '" + verb + "'");

            Command c;
            c.verb = verb;
            c.at_ms = at_ms;
            c.deferred = deferred;
            c.lineno = lineno;
            for (size_t j = i + 1; j < tokens.size(); ++j) {
                auto eq = tokens[j].find('=');
                if (eq == std::string::npos) {
                    c.args.push_back(tokens[j]);
                } else {
                    c.kv[tokens[j].substr(0, eq)] = tokens[j].substr(eq + 1);
                }
            }
            auto it = c.kv.find("expect");
            if (it != c.kv.end()) {
                c.expect = it->second;
                c.kv.erase(it);
            }
            s.commands.push_back(std::move(c));
        }
        if (s.topology_path.empty()) throw Error(Errc::parse, "scenario has no topology line");
        return s;
    }
};

namespace detail {

inline std::string fmt_ratio(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

struct RunOptions {
    std::optional<uint64_t> seed;     // overrides the scenario's seed line
    std::string out_dir;              // overrides the scenario's out line
    bool transcripts = false;
};

struct RunResult {
    int exit_status = 0;
    std::string report;
    std::string out_dir;
    uint32_t steps = 0;
    uint32_t failed_steps = 0;
};

// Executes one scenario deterministically under its seed and renders the
// line-oriented report. All state lives here; two runs with the same inputs
// produce byte-identical reports.
class Runner {
public:
    Runner(Scenario scenario, const RunOptions& opts)
        : sc_(std::move(scenario)), opts_(opts) {
        if (opts_.seed) sc_.seed = *opts_.seed;
        if (!opts_.out_dir.empty()) sc_.out_dir = opts_.out_dir;

        std::ifstream tf(sc_.topology_path);
        if (!tf) throw Error(Errc::parse, "cannot open topology " + sc_.topology_path);
        net_.topo = qnet::Topology::parse(tf);
        for (const auto& [id, info] : net_.topo.links()) {
            auto rt = net_.add_link_runtime(info);
            auto cp = sc_.channel.find(id);
            if (cp != sc_.channel.end()) rt->channel_params = cp->second;
            securechan::bootstrap_bb84_protection(*rt, derive_key_bytes("link-psk", id), 4096,
                                                  &net_.log);
        }
    }

    RunResult run() {
        for (const auto& c : sc_.commands) {
            if (c.deferred) {
                const Command* cmd = &c;
                events_.schedule(c.at_ms, [this, cmd] { execute(*cmd); });
            }
        }
        for (const auto& c : sc_.commands) {
            if (c.deferred) continue;
            events_.run_due(net_.clock);
            execute(c);
        }
        // let any remaining scheduled producers fire so reports are complete
        while (!events_.empty()) events_.advance_to_next(net_.clock, UINT64_MAX);
        finish_report();

        RunResult res;
        res.exit_status = failed_steps_ == 0 ? 0 : 1;
        res.report = report_.str();
        res.out_dir = sc_.out_dir;
        res.steps = step_;
        res.failed_steps = failed_steps_;
        return res;
    }

private:
    // --- report helpers ----------------------------------------------------

    // Step sections are buffered and appended on completion, so a deferred
    // command firing inside another step's blocking wait cannot interleave
    // output. Sections appear in completion order; step numbers in start
    // order. Both are deterministic.
    std::ostream& sink() { return sections_.empty() ? report_ : sections_.back(); }

    void section(const std::string& header) { sink() << "\n[" << header << "]\n"; }
    void put(const std::string& k, const std::string& v) { sink() << k << "=" << v << "\n"; }
    void put(const std::string& k, uint64_t v) { sink() << k << "=" << v << "\n"; }
    void put_ratio(const std::string& k, double v) { sink() << k << "=" << detail::fmt_ratio(v) << "\n"; }

    void outcome(const Command& c, const std::string& status, const std::string& detail = "") {
        put("status", status);
        if (!detail.empty()) put("detail", detail);
        bool matched = (status == c.expect);
        if (!matched) {
            ++failed_steps_;
            put("expected", c.expect);
        }
        // a pending fault on this target is considered detected when the step
        // reports the corresponding failure
        if (status != "ok")
            for (auto& f : faults_)
                if (f.detection == "pending") f.detection = status;
    }

    // --- command dispatch ----------------------------------------------------

    void execute(const Command& c) {
        ++step_;
        sections_.emplace_back();
        section("step " + std::to_string(step_) + " " + c.verb);
        put("line", uint64_t(c.lineno));
        put("time_ms", net_.clock.now_ms());
        try {
            if (c.verb == "qkd-session")
                cmd_qkd_session(c);
            else if (c.verb == "open-stream")
                cmd_open_stream(c);
            else if (c.verb == "consume")
                cmd_consume(c);
            else if (c.verb == "relay")
                cmd_relay(c);
            else if (c.verb == "handshake")
                cmd_handshake(c);
            else if (c.verb == "send-record")
                cmd_send_record(c);
            else if (c.verb == "inject-fault")
                cmd_inject_fault(c);
            else if (c.verb == "wait")
                cmd_wait(c);
        } catch (const InsufficientMaterial& e) {
            put("shortfall_bits", e.shortfall_bits());
            outcome(c, "insufficient-material", e.what());
        } catch (const Error& e) {
            outcome(c, errc_name(e.code()), e.what());
        }
        report_ << sections_.back().str();
        sections_.pop_back();
    }

    void cmd_qkd_session(const Command& c) {
        if (c.args.size() != 1) throw Error(Errc::parse, "qkd-session <link> [count=N ...]");
        auto& link = net_.link(c.args[0]);
        if (!link.operational) {
            put("link", c.args[0]);
            outcome(c, "link-down");
            return;
        }
        bb84::SessionParams params;
        params.photon_count = static_cast<uint32_t>(std::stoul(c.kv_or("count", "20000")));
        params.sample_fraction = std::stod(c.kv_or("sample", "0.1"));
        params.abort_threshold = std::stod(c.kv_or("threshold", "0.11"));
        size_t transcript_before = link.channel.transcript().size();
        auto res = bb84::run_link_session(link, params, derive_seed(sc_.seed, "session", step_));
        put("link", c.args[0]);
        put("session_id", res.session_id);
        put("photons", res.raw_count);
        put("detected", res.detected);
        put("sifted_bits", res.sifted_len);
        put_ratio("qber", res.qber);
        put("disclosed_bits", res.disclosed);
        put("reconciled_bits", res.reconciled_len);
        put("leaked_bits", res.leaked_bits);
        put("reconcile_rounds", res.rounds);
        put("final_bits", res.final_len);
        put("mac_source", mac_source_name(res.mac_source));
        if (opts_.transcripts && !sc_.out_dir.empty())
            dump_transcript(link, res.session_id, transcript_before);
        outcome(c, bb84::session_status_name(res.status), res.detail);
    }

    void cmd_open_stream(const Command& c) {
        if (c.args.size() != 2) throw Error(Errc::parse, "open-stream <link> <stream>");
        auto& link = net_.link(c.args[0]);
        link.open_stream_pair(c.args[1]);
        put("link", c.args[0]);
        put("stream", c.args[1]);
        put("cursor_block", link.store_a.cursor(c.args[1]).block_id);
        outcome(c, "ok");
    }

    void cmd_consume(const Command& c) {
        if (c.args.size() != 2) throw Error(Errc::parse, "consume <link> <stream> bits=N");
        auto& link = net_.link(c.args[0]);
        const std::string& stream = c.args[1];
        uint64_t bits = std::stoull(c.kv_or("bits", "0"));
        auto [a, b] = link.consume_pair(stream, bits);
        put("link", c.args[0]);
        put("stream", stream);
        put("bits", bits);
        put("replicas_match", uint64_t(a == b ? 1 : 0));
        std::string sync = "not-due";
        if (link.store_a.sync_due(stream) || link.store_b.sync_due(stream)) {
            sync = run_sync_check(link, stream);
        }
        put("sync", sync);
        outcome(c, sync == "desynchronized" ? "desynchronized" : "ok");
    }

    // Digest exchange over the link's classical channel in both directions,
    // then recovery on both replicas when they disagree.
    std::string run_sync_check(LinkRuntime& link, const std::string& stream) {
        uint64_t sync_session = 0x53594E4300000000ULL ^ step_;  // "SYNC" prefix
        MacKeyInfo mac = link.mac_provider->key_for_session(sync_session);
        link.channel.drain();
        link.channel.set_mac_key(mac.key);

        auto ship = [&](Side from, const keystore::DigestReport& rep) {
            Bytes payload;
            put_u64be(payload, rep.served_bits);
            payload.insert(payload.end(), rep.digest.begin(), rep.digest.end());
            link.channel.send(from, MsgType::sync_digest, sync_session, std::move(payload));
            Frame f = link.channel.recv(other(from), MsgType::sync_digest, sync_session);
            ByteReader r(f.payload);
            keystore::DigestReport remote;
            remote.served_bits = r.u64be();
            Bytes d = r.bytes(16);
            std::copy(d.begin(), d.end(), remote.digest.begin());
            return remote;
        };
        keystore::DigestReport b_at_a = ship(Side::b, link.store_b.digest_report(stream));
        keystore::DigestReport a_at_b = ship(Side::a, link.store_a.digest_report(stream));

        auto st_a = link.store_a.sync_check(stream, b_at_a);
        auto st_b = link.store_b.sync_check(stream, a_at_b);
        if (st_a == keystore::SyncStatus::ok && st_b == keystore::SyncStatus::ok) return "ok";
        net_.log.record(net_.clock.now_ms(), "sync",
                        "link " + link.link_id + " stream " + stream +
                            " desynchronized; recovering at next block boundary");
        link.store_a.recover(stream);
        link.store_b.recover(stream);
        for (auto& fl : faults_)
            if (fl.detection == "pending" && fl.kind == "skew") fl.detection = "desynchronized-recovered";
        return "desynchronized";
    }

    void cmd_relay(const Command& c) {
        if (c.args.size() != 2) throw Error(Errc::parse, "relay <src> <dst> bits=N");
        uint32_t bits = static_cast<uint32_t>(std::stoul(c.kv_or("bits", "1024")));
        const std::string stream = c.kv_or("stream", qnet::kRelayStream);
        auto res = qnet::relay_key(net_, c.args[0], c.args[1], bits, stream);
        put("src", c.args[0]);
        put("dst", c.args[1]);
        put("bits", bits);
        put("kind", res.path.kind == qnet::PathKind::direct ? "direct" : "multi-hop");
        std::string hops, inter;
        for (const auto& h : res.path.hops) hops += (hops.empty() ? "" : ",") + h;
        for (const auto& n : res.path.intermediates) inter += (inter.empty() ? "" : ",") + n;
        put("hops", hops);
        put("intermediates", inter.empty() ? "-" : inter);
        put("consumed_total_bits", res.consumed_total);
        for (const auto& [lid, n] : res.consumed_bits) put("consumed_" + lid, n);
        put("delivered_match", uint64_t(res.delivered == res.source_copy ? 1 : 0));
        outcome(c, "ok");
    }

    void cmd_handshake(const Command& c) {
        if (c.args.size() != 3)
            throw Error(Errc::parse, "handshake <name> <initiator> <responder> suites=...");
        const std::string& name = c.args[0];
        const std::string& src = c.args[1];
        const std::string& dst = c.args[2];
        if (sessions_.count(name)) throw Error(Errc::parse, "handshake name reused: " + name);

        auto parse_suites = [&](const std::string& csv) {
            std::vector<securechan::Ciphersuite> out;
            std::istringstream ss(csv);
            std::string item;
            while (std::getline(ss, item, ',')) {
                auto suite = securechan::suite_by_name(item);
                if (!suite) throw Error(Errc::parse, "unknown suite " + item);
                out.push_back(*suite);
            }
            if (out.empty()) throw Error(Errc::parse, "empty suite list");
            return out;
        };

        securechan::HandshakeConfig cfg;
        cfg.initiator_proposals = parse_suites(c.kv_or("suites", "classical-stub"));
        cfg.responder_preferences =
            parse_suites(c.kv_or("prefs", c.kv_or("suites", "classical-stub")));
        cfg.flavor = c.kv_or("flavor", "ike") == "tls" ? securechan::Flavor::tls
                                                       : securechan::Flavor::ike;
        cfg.psk = derive_key_bytes("pair-psk", src, dst);
        const std::string policy = c.kv_or("policy", "fail");
        if (policy == "fail") {
            cfg.policy.mode = securechan::ExhaustionPolicy::Mode::fail;
        } else if (policy == "fallback") {
            cfg.policy.mode = securechan::ExhaustionPolicy::Mode::fallback_classical;
        } else if (policy.rfind("block", 0) == 0) {
            cfg.policy.mode = securechan::ExhaustionPolicy::Mode::block_with_timeout;
            auto colon = policy.find(':');
            cfg.policy.timeout_ms =
                colon == std::string::npos ? 5000 : std::stoul(policy.substr(colon + 1));
        } else {
            throw Error(Errc::parse, "unknown policy " + policy);
        }
        if (c.kv.count("rekey-records"))
            cfg.rekey_after_records = std::stoul(c.kv.at("rekey-records"));

        auto conn = qnet::connection_info(net_.topo, src, dst);
        std::unique_ptr<securechan::MaterialSource> source;
        if (conn.possible && conn.kind == qnet::PathKind::direct) {
            source = std::make_unique<securechan::LinkStreamSource>(
                net_.link(conn_link(src, dst)), "secure-" + name, &net_.clock, &events_);
        } else if (conn.possible) {
            source = std::make_unique<securechan::RelayedSource>(net_, src, dst, 4096, &events_);
        } else {
            source = std::make_unique<securechan::PoolSource>();  // classical only
        }
        if (conn.setup_delay_ms > 0) net_.clock.advance(conn.setup_delay_ms);

        auto session = std::make_unique<securechan::SecureSession>(
            next_handshake_id_++, *source, cfg, conn, derive_seed(sc_.seed, "handshake", step_),
            &net_.clock, &net_.log);

        put("name", name);
        put("initiator", src);
        put("responder", dst);
        put("kind", conn.possible
                        ? (conn.kind == qnet::PathKind::direct ? "direct" : "multi-hop")
                        : "no-qkd-route");
        if (conn.setup_delay_ms > 0) put("setup_delay_ms", conn.setup_delay_ms);
        put("suite", session->suite().name());
        put("flavor", cfg.flavor == securechan::Flavor::tls ? "tls" : "ike");
        put("keys_match", uint64_t(session->keys(Side::a) == session->keys(Side::b) ? 1 : 0));
        sessions_[name] = {std::move(session), std::move(source)};
        outcome(c, "ok");
    }

    void cmd_send_record(const Command& c) {
        if (c.args.size() != 2) throw Error(Errc::parse, "send-record <name> <i2r|r2i> ...");
        auto it = sessions_.find(c.args[0]);
        if (it == sessions_.end()) throw Error(Errc::parse, "no handshake named " + c.args[0]);
        auto& session = *it->second.session;
        Side sender = c.args[1] == "r2i" ? Side::b : Side::a;

        Bytes plaintext;
        if (c.kv.count("text")) {
            const std::string& t = c.kv.at("text");
            plaintext.assign(t.begin(), t.end());
        } else {
            uint64_t len = std::stoull(c.kv_or("len", "64"));
            plaintext = derive_rng(sc_.seed, "record-payload", step_).bytes(len);
        }

        Bytes raw = session.protect_with_policy(sender, plaintext);
        Bytes back = session.unprotect(other(sender), raw);
        put("name", c.args[0]);
        put("direction", c.args[1] == "r2i" ? "r2i" : "i2r");
        put("bytes", uint64_t(plaintext.size()));
        put("suite", session.suite().name());
        put("round_trip_match", uint64_t(back == plaintext ? 1 : 0));
        if (session.stats().downgraded) put("downgraded", uint64_t(1));
        outcome(c, back == plaintext ? "ok" : "corrupted");
    }

    void cmd_inject_fault(const Command& c) {
        if (c.args.empty()) throw Error(Errc::parse, "inject-fault <kind> ...");
        const std::string& kind = c.args[0];
        FaultEntry f;
        f.index = static_cast<uint32_t>(faults_.size() + 1);
        f.kind = kind;
        if (kind == "tamper") {
            if (c.args.size() != 2) throw Error(Errc::parse, "inject-fault tamper <link>");
            net_.link(c.args[1]).channel.tamper_next();
            f.target = c.args[1];
        } else if (kind == "skew") {
            if (c.args.size() != 4)
                throw Error(Errc::parse, "inject-fault skew <link> <stream> <a|b> [bits=N]");
            auto& link = net_.link(c.args[1]);
            uint64_t bits = std::stoull(c.kv_or("bits", "1"));
            auto& store = c.args[3] == "b" ? link.store_b : link.store_a;
            store.inject_cursor_skew(c.args[2], bits);
            f.target = c.args[1] + "/" + c.args[2] + "/" + c.args[3];
        } else if (kind == "down" || kind == "up") {
            if (c.args.size() != 2) throw Error(Errc::parse, "inject-fault down|up <link>");
            bool up = kind == "up";
            net_.topo.link_mutable(c.args[1]).operational = up;
            net_.link(c.args[1]).operational = up;
            f.target = c.args[1];
            f.detection = "applied";
        } else if (kind == "stall") {
            if (c.args.size() != 2) throw Error(Errc::parse, "inject-fault stall <link>");
            net_.link(c.args[1]).channel.stall_next();
            f.target = c.args[1];
        } else {
            throw Error(Errc::parse, "unknown fault kind " + kind);
        }
        put("kind", kind);
        put("target", f.target);
        faults_.push_back(f);
        outcome(c, "ok");
    }

    void cmd_wait(const Command& c) {
        if (c.args.size() != 1) throw Error(Errc::parse, "wait <ms>");
        uint64_t ms = std::stoull(c.args[0]);
        uint64_t deadline = net_.clock.now_ms() + ms;
        while (events_.advance_to_next(net_.clock, deadline)) {
        }
        if (net_.clock.now_ms() < deadline) net_.clock.advance(deadline - net_.clock.now_ms());
        put("ms", ms);
        outcome(c, "ok");
    }

    // --- epilogue -----------------------------------------------------------

    void dump_transcript(LinkRuntime& link, uint64_t session_id, size_t from) {
        namespace fs = std::filesystem;
        fs::create_directories(sc_.out_dir);
        fs::path p = fs::path(sc_.out_dir) /
                     ("session_" + link.link_id + "_" + std::to_string(session_id) + ".transcript");
        std::ofstream f(p);
        const auto& tr = link.channel.transcript();
        for (size_t i = from; i < tr.size(); ++i)
            f << side_name(tr[i].from) << " " << to_hex(tr[i].raw) << "\n";
    }

    void finish_report() {
        section("links");
        for (const auto& [id, rt] : net_.links) {
            put("link_" + id + "_blocks", rt->store_a.block_count());
            put("link_" + id + "_available_bits", rt->store_a.total_available());
            put("link_" + id + "_quarantined_bits", rt->store_a.quarantined_bits());
        }
        section("streams");
        for (const auto& [id, rt] : net_.links)
            for (const auto& sid : rt->store_a.open_streams())
                put("stream_" + id + "_" + sid + "_served_bits", rt->store_a.served_bits_total(sid));
        section("faults");
        put("count", uint64_t(faults_.size()));
        for (const auto& f : faults_)
            put("fault_" + std::to_string(f.index),
                f.kind + " target=" + f.target + " detection=" + f.detection);
        section("events");
        for (const auto& e : net_.log.entries())
            report_ << "t=" << e.time_ms << " [" << e.category << "] " << e.message << "\n";

        std::ostringstream head;
        head << "[run]\n";
        head << "scenario=" << sc_.name << "\n";
        head << "seed=" << sc_.seed << "\n";
        head << "steps=" << step_ << "\n";
        head << "failed_steps=" << failed_steps_ << "\n";
        head << "sim_time_ms=" << net_.clock.now_ms() << "\n";
        head << "status=" << (failed_steps_ == 0 ? "ok" : "failed") << "\n";
        std::string body = report_.str();
        report_.str(head.str() + body);
    }

    std::string conn_link(const std::string& a, const std::string& b) {
        auto p = qnet::route(net_.topo, a, b);
        if (!p || p->hops.size() != 1) throw Error(Errc::no_route, "no direct link " + a + "-" + b);
        return p->hops[0];
    }

    struct SessionSlot {
        std::unique_ptr<securechan::SecureSession> session;
        std::unique_ptr<securechan::MaterialSource> source;
    };

    struct FaultEntry {
        uint32_t index = 0;
        std::string kind;
        std::string target;
        std::string detection = "pending";
    };

    Scenario sc_;
    RunOptions opts_;
    qnet::Network net_;
    EventQueue events_;
    std::map<std::string, SessionSlot> sessions_;
    std::vector<FaultEntry> faults_;
    std::ostringstream report_;
    std::vector<std::ostringstream> sections_;
    uint32_t step_ = 0;
    uint32_t failed_steps_ = 0;
    uint64_t next_handshake_id_ = 1;
};

inline RunResult run_scenario(Scenario scenario, const RunOptions& opts) {
    Runner runner(std::move(scenario), opts);
    RunResult res = runner.run();
    if (!res.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(res.out_dir);
        std::ofstream f(fs::path(res.out_dir) / "report.txt", std::ios::binary | std::ios::trunc);
        f << res.report;
    }
    return res;
}

// One summary row per step from a written report; the `stats` subcommand.
inline std::string summarize_report(std::istream& in) {
    std::ostringstream out;
    std::string line;
    std::string cur_step, status, detail, extra;
    bool any = false;
    auto flush = [&] {
        if (cur_step.empty()) return;
        out << cur_step;
        out << std::string(cur_step.size() < 28 ? 28 - cur_step.size() : 1, ' ');
        out << (status.empty() ? "?" : status);
        if (!extra.empty()) out << "  " << extra;
        if (!detail.empty() && status != "ok") out << "  (" << detail << ")";
        out << "\n";
        cur_step.clear();
        status.clear();
        detail.clear();
        extra.clear();
    };
    while (std::getline(in, line)) {
        if (line.size() > 1 && line.front() == '[') {
            flush();
            std::string name = line.substr(1, line.size() - 2);
            if (name.rfind("step ", 0) == 0) {
                cur_step = name;
                any = true;
            }
            continue;
        }
        if (cur_step.empty()) {
            if (line.rfind("scenario=", 0) == 0 || line.rfind("seed=", 0) == 0 ||
                line.rfind("status=", 0) == 0 || line.rfind("failed_steps=", 0) == 0)
                out << line << "\n";
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "status") status = v;
        else if (k == "detail") detail = v;
        else if (k == "qber") extra += "qber=" + v + " ";
        else if (k == "final_bits") extra += "final=" + v + " ";
        else if (k == "suite") extra += "suite=" + v + " ";
        else if (k == "bits" || k == "bytes") extra += k + "=" + v + " ";
    }
    flush();
    if (!any) out << "(no steps in report)\n";
    return out.str();
}

}  // namespace scenario
}  // namespace qkdsim

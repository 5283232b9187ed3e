#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qkdsim {

enum class Errc {
    protocol,                  // peers desynchronized / malformed exchange
    insufficient_material,     // key store cannot serve the request
    mac_failure,               // classical message failed authentication
    eavesdrop_suspected,       // QBER above abort threshold
    reconciliation_failure,    // digest mismatch after cascade
    negotiation_failure,       // no common ciphersuite or handshake timeout
    auth_failure,              // peer authentication MAC mismatch
    timeout,                   // peer stalled past the timeout budget
    desynchronized,            // stream sync error
    replay,                    // non-incrementing record sequence
    no_route,                  // no operational QKD path
    untrusted_path,            // relay would cross an untrusted node
    contract,                  // caller violated a documented precondition
    parse                      // config/scenario syntax error
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::protocol: return "protocol";
        case Errc::insufficient_material: return "insufficient-material";
        case Errc::mac_failure: return "mac-failure";
        case Errc::eavesdrop_suspected: return "eavesdrop-suspected";
        case Errc::reconciliation_failure: return "reconciliation-failure";
        case Errc::negotiation_failure: return "negotiation-failure";
        case Errc::auth_failure: return "auth-failure";
        case Errc::timeout: return "timeout";
        case Errc::desynchronized: return "desynchronized";
        case Errc::replay: return "replay";
        case Errc::no_route: return "no-route";
        case Errc::untrusted_path: return "untrusted-path";
        case Errc::contract: return "contract-violation";
        case Errc::parse: return "parse-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

// Carries the shortfall so exhaustion policies can report exactly how many
// bits were missing.
class InsufficientMaterial : public Error {
public:
    InsufficientMaterial(uint64_t shortfall_bits, const std::string& what)
        : Error(Errc::insufficient_material, what), shortfall_(shortfall_bits) {}

    uint64_t shortfall_bits() const { return shortfall_; }

private:
    uint64_t shortfall_;
};

}  // namespace qkdsim

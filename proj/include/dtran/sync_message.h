#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace dtran::sync {

inline constexpr int kProtocolVersion = 1;

enum class MsgType
{
    hello,
    topology_full,
    state_delta,
    kpi_report,
    snapshot_request,
    snapshot_full,
    config_push,
    config_ack,
    heartbeat,
};

const char* msg_type_name(MsgType t);
std::optional<MsgType> msg_type_from_name(std::string_view s);

struct SyncMessage
{
    int v = kProtocolVersion;
    MsgType type = MsgType::heartbeat;
    std::uint64_t seq = 0;
    std::int64_t t_sim_ms = 0;
    nlohmann::json payload = nlohmann::json::object();

    bool operator==(const SyncMessage&) const = default;
};

class ProtocolError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// One line of compact JSON with sorted keys, newline-terminated.
std::string encode(const SyncMessage& m);

/// Parses one line (a trailing newline is allowed). Checks the envelope and
/// the required payload fields of the type. Throws ProtocolError.
SyncMessage decode(std::string_view line);

/// Throws ProtocolError if a required payload field is missing or mistyped.
void validate_payload(MsgType type, const nlohmann::json& payload);

} // namespace dtran::sync

#include "dtran/sync_message.h"

#include <array>
#include <utility>

namespace dtran::sync {

namespace {

constexpr std::array<std::pair<MsgType, const char*>, 9> kNames{{
    {MsgType::hello, "HELLO"},
    {MsgType::topology_full, "TOPOLOGY_FULL"},
    {MsgType::state_delta, "STATE_DELTA"},
    {MsgType::kpi_report, "KPI_REPORT"},
    {MsgType::snapshot_request, "SNAPSHOT_REQUEST"},
    {MsgType::snapshot_full, "SNAPSHOT_FULL"},
    {MsgType::config_push, "CONFIG_PUSH"},
    {MsgType::config_ack, "CONFIG_ACK"},
    {MsgType::heartbeat, "HEARTBEAT"},
}};

enum class Shape
{
    string,
    unsigned_int,
    integer,
    array,
    object,
};

bool
has_shape(const nlohmann::json& v, Shape s)
{
    switch (s)
    {
    case Shape::string:
        return v.is_string();
    case Shape::unsigned_int:
        return v.is_number_unsigned();
    case Shape::integer:
        return v.is_number_integer();
    case Shape::array:
        return v.is_array();
    case Shape::object:
        return v.is_object();
    }
    return false;
}

void
require(const nlohmann::json& p, const char* field, Shape s)
{
    if (!p.contains(field) || !has_shape(p.at(field), s))
    {
        throw ProtocolError(std::string("payload field '") + field + "' missing or mistyped");
    }
}

} // namespace

const char*
msg_type_name(MsgType t)
{
    for (const auto& [type, name] : kNames)
    {
        if (type == t)
        {
            return name;
        }
    }
    return "UNKNOWN";
}

std::optional<MsgType>
msg_type_from_name(std::string_view s)
{
    for (const auto& [type, name] : kNames)
    {
        if (s == name)
        {
            return type;
        }
    }
    return std::nullopt;
}

void
validate_payload(MsgType type, const nlohmann::json& p)
{
    if (!p.is_object())
    {
        throw ProtocolError("payload must be an object");
    }
    switch (type)
    {
    case MsgType::hello:
        require(p, "node", Shape::string);
        require(p, "protocol", Shape::unsigned_int);
        break;
    case MsgType::topology_full:
        require(p, "topology", Shape::object);
        break;
    case MsgType::state_delta:
        require(p, "changes", Shape::array);
        for (const auto& c : p.at("changes"))
        {
            require(c, "kind", Shape::string);
            require(c, "id", Shape::string);
            require(c, "attrs", Shape::object);
        }
        break;
    case MsgType::kpi_report:
        require(p, "t_start_ms", Shape::integer);
        require(p, "t_end_ms", Shape::integer);
        require(p, "records", Shape::array);
        break;
    case MsgType::snapshot_request:
        require(p, "reason", Shape::string);
        require(p, "expected_seq", Shape::unsigned_int);
        break;
    case MsgType::snapshot_full:
        require(p, "topology", Shape::object);
        require(p, "entities", Shape::array);
        break;
    case MsgType::config_push:
        require(p, "txn_id", Shape::string);
        require(p, "changes", Shape::array);
        break;
    case MsgType::config_ack:
        require(p, "txn_id", Shape::string);
        require(p, "status", Shape::string);
        break;
    case MsgType::heartbeat:
        break;
    }
}

std::string
encode(const SyncMessage& m)
{
    nlohmann::json j{{"v", m.v},
                     {"type", msg_type_name(m.type)},
                     {"seq", m.seq},
                     {"t_sim_ms", m.t_sim_ms},
                     {"payload", m.payload}};
    return j.dump() + '\n';
}

SyncMessage
decode(std::string_view line)
{
    if (!line.empty() && line.back() == '\n')
    {
        line.remove_suffix(1);
    }
    if (line.find('\n') != std::string_view::npos)
    {
        throw ProtocolError("embedded newline in frame");
    }
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(line);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw ProtocolError(std::string("malformed frame: ") + e.what());
    }
    if (!j.is_object() || j.size() != 5)
    {
        throw ProtocolError("frame must be an object with exactly v, type, seq, t_sim_ms, payload");
    }
    require(j, "v", Shape::unsigned_int);
    require(j, "type", Shape::string);
    require(j, "seq", Shape::unsigned_int);
    require(j, "t_sim_ms", Shape::integer);
    if (!j.contains("payload"))
    {
        throw ProtocolError("frame has no payload");
    }
    if (j.at("v").get<int>() != kProtocolVersion)
    {
        throw ProtocolError("unsupported protocol version");
    }
    auto type = msg_type_from_name(j.at("type").get<std::string>());
    if (!type)
    {
        throw ProtocolError("unknown message type '" + j.at("type").get<std::string>() + "'");
    }
    validate_payload(*type, j.at("payload"));

    SyncMessage m;
    m.v = kProtocolVersion;
    m.type = *type;
    m.seq = j.at("seq").get<std::uint64_t>();
    m.t_sim_ms = j.at("t_sim_ms").get<std::int64_t>();
    m.payload = std::move(j.at("payload"));
    return m;
}

} // namespace dtran::sync

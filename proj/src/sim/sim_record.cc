#include "dtran/sim_record.h"

#include "dtran/hashing.h"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string_view>

namespace dtran {

namespace {

constexpr std::pair<RecordKind, const char*> kNames[] = {
    {RecordKind::handover, "HANDOVER"},
    {RecordKind::pingpong, "PINGPONG"},
    {RecordKind::rlf, "RLF"},
    {RecordKind::reattach, "REATTACH"},
    {RecordKind::config_applied, "CONFIG_APPLIED"},
    {RecordKind::kpi_sample, "KPI_SAMPLE"},
};

nlohmann::json
cell_or_null(CellId c)
{
    return c == kOutage ? nlohmann::json(nullptr) : nlohmann::json(c);
}

CellId
cell_from(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null())
    {
        return kOutage;
    }
    return j.at(key).get<CellId>();
}

} // namespace

const char*
record_kind_name(RecordKind k)
{
    for (const auto& [kind, name] : kNames)
    {
        if (kind == k)
        {
            return name;
        }
    }
    return "UNKNOWN";
}

std::optional<RecordKind>
record_kind_from_name(const std::string& s)
{
    for (const auto& [kind, name] : kNames)
    {
        if (s == name)
        {
            return kind;
        }
    }
    return std::nullopt;
}

nlohmann::json
record_to_json(const SimRecord& r)
{
    nlohmann::json j{{"t_ms", r.t_ms}, {"type", record_kind_name(r.kind)}};
    switch (r.kind)
    {
    case RecordKind::handover:
    case RecordKind::pingpong:
        j["ue"] = r.ue;
        j["from"] = r.from_cell;
        j["to"] = r.to_cell;
        break;
    case RecordKind::rlf:
        j["ue"] = r.ue;
        j["from"] = r.from_cell;
        break;
    case RecordKind::reattach:
        j["ue"] = r.ue;
        j["to"] = r.to_cell;
        break;
    case RecordKind::config_applied:
        j["txn_id"] = r.txn_id;
        j["cells"] = r.cells;
        break;
    case RecordKind::kpi_sample:
        j["ue"] = r.ue;
        j["cell"] = cell_or_null(r.from_cell);
        j["thr_bps"] = r.thr_bps;
        break;
    }
    return j;
}

SimRecord
record_from_json(const nlohmann::json& j)
{
    try
    {
        SimRecord r;
        r.t_ms = j.at("t_ms").get<std::int64_t>();
        auto kind = record_kind_from_name(j.at("type").get<std::string>());
        if (!kind)
        {
            throw std::invalid_argument("unknown record type");
        }
        r.kind = *kind;
        switch (r.kind)
        {
        case RecordKind::handover:
        case RecordKind::pingpong:
            r.ue = j.at("ue").get<std::uint32_t>();
            r.from_cell = cell_from(j, "from");
            r.to_cell = cell_from(j, "to");
            break;
        case RecordKind::rlf:
            r.ue = j.at("ue").get<std::uint32_t>();
            r.from_cell = cell_from(j, "from");
            break;
        case RecordKind::reattach:
            r.ue = j.at("ue").get<std::uint32_t>();
            r.to_cell = cell_from(j, "to");
            break;
        case RecordKind::config_applied:
            r.txn_id = j.at("txn_id").get<std::string>();
            r.cells = j.at("cells").get<std::vector<CellId>>();
            break;
        case RecordKind::kpi_sample:
            r.ue = j.at("ue").get<std::uint32_t>();
            r.from_cell = cell_from(j, "cell");
            r.thr_bps = j.at("thr_bps").get<double>();
            break;
        }
        return r;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::invalid_argument(std::string("malformed record: ") + e.what());
    }
}

std::string
record_line(const SimRecord& r)
{
    return record_to_json(r).dump();
}

void
write_records(std::ostream& out, const std::vector<SimRecord>& records)
{
    for (const auto& r : records)
    {
        out << record_line(r) << '\n';
    }
}

std::vector<SimRecord>
read_records(std::istream& in)
{
    std::vector<SimRecord> out;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty())
        {
            continue;
        }
        nlohmann::json j;
        try
        {
            j = nlohmann::json::parse(line);
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw std::invalid_argument(std::string("malformed record line: ") + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

std::uint64_t
log_hash(const std::vector<SimRecord>& records)
{
    std::uint64_t h = fnv1a64("");
    for (const auto& r : records)
    {
        h = fnv1a64(record_line(r), h);
        h = fnv1a64("\n", h);
    }
    return h;
}

} // namespace dtran

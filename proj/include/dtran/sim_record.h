#pragma once

#include "dtran/radio_model.h"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran {

inline constexpr CellId kOutage = std::numeric_limits<CellId>::max();

enum class RecordKind
{
    handover,
    pingpong,
    rlf,
    reattach,
    config_applied,
    kpi_sample,
};

const char* record_kind_name(RecordKind k);
std::optional<RecordKind> record_kind_from_name(const std::string& s);

/// One line of the simulator log. Discrete events and the per-UE,
/// per-second throughput samples share the log so that a replay of the log
/// alone reproduces every KPI window.
struct SimRecord
{
    std::int64_t t_ms = 0;
    RecordKind kind = RecordKind::handover;
    std::uint32_t ue = 0;
    /// handover/pingpong: source cell; rlf: failing cell; kpi_sample: serving
    /// cell at sampling time (kOutage while in outage).
    CellId from_cell = kOutage;
    /// handover/pingpong/reattach: target cell.
    CellId to_cell = kOutage;
    double thr_bps = 0.0;
    std::string txn_id;
    std::vector<CellId> cells;

    bool operator==(const SimRecord&) const = default;
};

/// kpi_sample lines are measurements, everything else is an event.
inline bool
is_event(const SimRecord& r)
{
    return r.kind != RecordKind::kpi_sample;
}

nlohmann::json record_to_json(const SimRecord& r);
/// Throws std::invalid_argument on malformed input.
SimRecord record_from_json(const nlohmann::json& j);

/// One compact JSON document per line, stable key order.
std::string record_line(const SimRecord& r);
void write_records(std::ostream& out, const std::vector<SimRecord>& records);
std::vector<SimRecord> read_records(std::istream& in);

/// FNV-1a over the newline-delimited serialization.
std::uint64_t log_hash(const std::vector<SimRecord>& records);

} // namespace dtran

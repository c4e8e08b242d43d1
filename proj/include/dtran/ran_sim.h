#pragma once

#include "dtran/cell_config.h"
#include "dtran/kpi.h"
#include "dtran/sim_record.h"
#include "dtran/topology.h"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran {

inline constexpr std::int64_t kTickMs = 100;
inline constexpr std::int64_t kKpiSampleMs = 1000;
inline constexpr double kRlfSinrThresholdDb = -6.0;
inline constexpr int kRlfDurationMs = 1000;
inline constexpr int kOutageMs = 2000;
inline constexpr int kHandoverInterruptionMs = 50;
inline constexpr std::int64_t kPingPongWindowMs = 3000;
inline constexpr double kMinSpeedMps = 0.5;
inline constexpr double kMaxSpeedMps = 15.0;

enum class A3Result
{
    none,
    pending,
    handover,
};

/// A3 entry condition is `neighbor > serving + hysteresis` (strict).
/// `elapsed_ttt_ms` is how long the condition has held, this tick included.
A3Result a3_check(double serving_rsrp_dbm,
                  double neighbor_rsrp_dbm,
                  double hysteresis_db,
                  int elapsed_ttt_ms,
                  int ttt_ms);

enum class RlfResult
{
    ok,
    failure,
};

/// `rlf_timer_ms` is the continuous time spent below -6 dB, this tick
/// included.
RlfResult rlf_check(double sinr_db, int rlf_timer_ms);

struct UeState
{
    std::uint32_t id = 0;
    double x_m = 0.0;
    double y_m = 0.0;
    double wp_x_m = 0.0;
    double wp_y_m = 0.0;
    double speed_mps = 0.0;
    std::uint64_t leg = 0;
    CellId serving = kOutage;
    std::map<CellId, int> ttt_ms;
    std::optional<CellId> last_ho_from;
    std::int64_t last_ho_t_ms = 0;
    int rlf_timer_ms = 0;
    int outage_ms = 0;
    double acc_bits = 0.0;
    double rsrp_dbm = 0.0;
    double sinr_db = 0.0;

    double heading_deg() const;
    bool operator==(const UeState&) const = default;
};

nlohmann::json ue_state_to_json(const UeState& ue);
UeState ue_state_from_json(std::uint32_t id, const nlohmann::json& j);

enum class RejectReason
{
    none,
    out_of_range,
    unknown_cell,
};

const char* reject_reason_name(RejectReason r);

struct ApplyResult
{
    bool applied = false;
    RejectReason reason = RejectReason::none;
    /// Offending field for out_of_range, empty otherwise.
    std::string field;
    CellId cell = 0;

    bool operator==(const ApplyResult&) const = default;
};

/// Validates a batch against the topology and the parameter domains without
/// applying it.
ApplyResult validate_changes(const Topology& topo, const ChangeSet& changes);

/// The physical-network emulator. Value type: copying a World forks an
/// independent, identically evolving replica.
class World
{
  public:
    /// Fresh world: UEs placed from the topology seed and attached to the
    /// strongest primary-band cell.
    explicit World(Topology topo);

    /// Restores a world mid-run from externally held state.
    World(Topology topo, std::vector<UeState> ues, std::int64_t now_ms);

    /// Advances one 100 ms tick. Returns the records produced by this tick;
    /// they are also appended to log().
    std::vector<SimRecord> step();

    /// Steps until now_ms() >= target_ms.
    void run_until(std::int64_t target_ms);

    /// All-or-nothing validation; accepted batches take effect at the next
    /// tick boundary, where a CONFIG_APPLIED record is emitted.
    ApplyResult apply_config(const std::string& txn_id, const ChangeSet& changes);

    /// Immediate, silent reconfiguration used when forking what-if replicas.
    /// Throws std::invalid_argument for an invalid batch.
    void set_configs(const ChangeSet& changes);

    /// Replaces the mobility seed (future waypoint legs only).
    void reseed(std::uint64_t seed);

    std::int64_t now_ms() const { return now_ms_; }
    const Topology& topology() const { return topo_; }
    const std::vector<UeState>& ues() const { return ues_; }
    const std::vector<SimRecord>& log() const { return log_; }
    void clear_log() { log_.clear(); }
    bool has_pending_config() const { return !pending_.empty(); }

    const CellConfig& config(CellId cell) const;
    ConfigMap config_map() const { return topo_.config_map(); }

    /// Primary-band RSRP from every cell (topology order) at the UE position.
    std::vector<double> rsrp_row(double x_m, double y_m) const;

    /// Index of the strongest cell in `row`; ties go to the lowest cell id.
    std::size_t strongest(const std::vector<double>& row) const;

  private:
    struct PendingTxn
    {
        std::string txn_id;
        ChangeSet changes;
    };

    void init_ues();
    void draw_leg(UeState& ue) const;
    void move(UeState& ue) const;
    std::size_t cell_index(CellId id) const;
    double link_rsrp(std::size_t cell_idx, const radio::BandSpec& band, double x_m, double y_m) const;

    Topology topo_;
    std::vector<UeState> ues_;
    std::vector<PendingTxn> pending_;
    std::vector<SimRecord> log_;
    std::int64_t now_ms_ = 0;
};

} // namespace dtran

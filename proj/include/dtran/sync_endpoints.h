#pragma once

#include "dtran/channel.h"
#include "dtran/ran_sim.h"
#include "dtran/sync_message.h"
#include "dtran/twin_graph.h"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dtran::sync {

inline constexpr double kMaxTwinningRateHz = 1000.0 / static_cast<double>(kTickMs);

/// Throws std::invalid_argument unless 0 < rate <= tick rate.
void validate_twinning_rate(double rate_hz);

struct SyncConfig
{
    double twinning_rate_hz = 1.0;
    twin::FidelityTier tier = twin::FidelityTier::L2;
    std::int64_t aot_threshold_ms = 2000;
    /// Re-request interval while a snapshot is outstanding: one tick, the
    /// physical side's reaction granularity.
    std::int64_t snapshot_retry_ms = 100;
    /// A sender is alive if a frame from it arrived within this window;
    /// 0 means aot_threshold_ms plus one twinning period.
    std::int64_t liveness_ms = 0;
    std::int64_t push_retransmit_ms = 1000;
    std::int64_t push_timeout_ms = 5000;
    std::int64_t heartbeat_ms = 1000;
};

std::int64_t effective_liveness_ms(const SyncConfig& cfg);

nlohmann::json entity_to_json(const twin::EntityUpdate& e);
twin::EntityUpdate entity_from_json(const nlohmann::json& j);

/// Telemetry source attached to the physical world.
class PhysicalEndpoint
{
  public:
    static constexpr const char* kNode = "physical";

    /// Throws std::invalid_argument for an unsupported twinning rate.
    PhysicalEndpoint(World& world, double twinning_rate_hz);

    /// HELLO, TOPOLOGY_FULL and an initial SNAPSHOT_FULL.
    std::vector<SyncMessage> start();

    /// Handles an uplink frame. Effects surface in the next after_tick().
    void receive(const SyncMessage& m);

    /// Emissions for the world's current time, called right after a step:
    /// pending CONFIG_ACKs, KPI_REPORT on whole seconds, STATE_DELTA on the
    /// twinning schedule, then SNAPSHOT_FULL if one was requested.
    std::vector<SyncMessage> after_tick();

    /// Attribute image sent with each SNAPSHOT_FULL, by message seq.
    const std::map<std::uint64_t, std::vector<twin::EntityUpdate>>& snapshot_images() const { return images_; }
    std::uint64_t delta_emissions() const { return delta_emissions_; }
    std::uint64_t snapshots_sent() const { return images_.size(); }
    /// Distinct transactions handed to the world.
    std::uint64_t applications() const { return applications_; }
    std::uint64_t push_deliveries() const { return push_deliveries_; }

  private:
    SyncMessage make(MsgType type, nlohmann::json payload);
    SyncMessage make_snapshot();

    World& world_;
    double rate_hz_;
    std::uint64_t seq_ = 0;
    std::uint64_t emission_index_ = 1;
    std::vector<twin::EntityUpdate> last_image_;
    std::size_t log_cursor_ = 0;
    bool snapshot_requested_ = false;
    std::map<std::uint64_t, std::vector<twin::EntityUpdate>> images_;
    std::map<std::string, nlohmann::json> ack_cache_;
    std::set<std::string> awaiting_apply_;
    std::vector<std::string> ack_queue_;
    std::uint64_t delta_emissions_ = 0;
    std::uint64_t applications_ = 0;
    std::uint64_t push_deliveries_ = 0;
};

enum class PushStatus
{
    pending,
    applied,
    rejected,
    timeout,
};

const char* push_status_name(PushStatus s);

struct PushState
{
    std::string txn_id;
    ChangeSet changes;
    PushStatus status = PushStatus::pending;
    std::int64_t first_sent_ms = 0;
    std::int64_t last_sent_ms = 0;
    std::uint32_t transmissions = 0;
    nlohmann::json ack;
};

struct TwinCounters
{
    std::uint64_t deltas_applied = 0;
    std::uint64_t deltas_discarded = 0;
    std::uint64_t stale_frames = 0;
    std::uint64_t gaps = 0;
    std::uint64_t unknown_entity = 0;
    std::uint64_t snapshot_requests = 0;
    std::uint64_t snapshots_applied = 0;
    std::uint64_t acks_received = 0;
};

/// Age-of-twin bookkeeping, integrated exactly between events.
class AotTracker
{
  public:
    /// Moves the clock to t_ms with the current stamps.
    void advance(std::int64_t t_ms);
    /// Replaces the mean and oldest stamp after an ingest at t_ms.
    void restamp(std::int64_t t_ms, double mean_stamp_ms, std::int64_t min_stamp_ms);

    bool started() const { return started_; }
    double mean_s(std::int64_t t_ms) const;
    double max_s(std::int64_t t_ms) const;
    /// Time average of the mean AoT since the first sync.
    double time_avg_mean_s(std::int64_t t_ms) const;
    /// Largest max AoT ever observed up to t_ms.
    double peak_max_s(std::int64_t t_ms) const;
    std::int64_t min_stamp_ms() const { return min_stamp_ms_; }

  private:
    bool started_ = false;
    std::int64_t start_ms_ = 0;
    std::int64_t last_ms_ = 0;
    double integral_ms2_ = 0.0;
    double mean_stamp_ms_ = 0.0;
    std::int64_t min_stamp_ms_ = 0;
    std::int64_t peak_max_ms_ = 0;
};

/// Ingester on the twin side: sequence tracking, gap recovery, KPI history
/// and the config-push tracker.
class TwinEndpoint
{
  public:
    static constexpr const char* kNode = "twin";

    TwinEndpoint(twin::TwinStore& store, SyncConfig cfg);

    std::vector<SyncMessage> start(std::int64_t t_ms);
    std::vector<SyncMessage> receive(const SyncMessage& m, std::int64_t t_ms);
    std::vector<SyncMessage> on_timer(std::int64_t t_ms);
    std::optional<std::int64_t> next_timer_ms() const;

    /// Starts (or safely restarts after a timeout) a push. Returns the frames
    /// to send; empty if the transaction already completed.
    std::vector<SyncMessage> push_config(const std::string& txn_id, const ChangeSet& changes, std::int64_t t_ms);
    const PushState* push(const std::string& txn_id) const;

    const SyncConfig& config() const { return cfg_; }
    const TwinCounters& counters() const { return counters_; }
    const AotTracker& aot() const { return aot_; }
    twin::TwinMetrics metrics(std::int64_t t_ms) const;
    bool awaiting_snapshot() const { return awaiting_; }
    std::uint64_t expected_seq() const { return expected_; }

    /// Every KPI record received, in time order.
    const std::vector<SimRecord>& kpi_records() const { return records_; }
    /// End times of the KPI seconds received.
    const std::set<std::int64_t>& kpi_seconds() const { return kpi_seconds_; }

    std::function<void(std::uint64_t seq, std::int64_t t_ms)> on_snapshot_applied;
    std::function<void(const std::vector<SimRecord>& records, std::int64_t t_end_ms)> on_kpi_report;
    /// After a delta or snapshot lands; `state_t_ms` is its source time.
    std::function<void(std::int64_t state_t_ms, std::int64_t t_ms)> on_state_applied;
    std::function<void(const PushState& push)> on_push_done;

  private:
    SyncMessage make(MsgType type, nlohmann::json payload);
    SyncMessage request(const char* reason, std::int64_t t_ms);
    void restamp(std::int64_t t_ms);
    void handle_kpi(const SyncMessage& m);
    void handle_ack(const SyncMessage& m);

    twin::TwinStore& store_;
    SyncConfig cfg_;
    std::uint64_t seq_ = 0;
    std::uint64_t expected_ = 1;
    bool awaiting_ = false;
    bool retry_paused_ = false;
    bool threshold_armed_ = true;
    std::int64_t last_request_ms_ = 0;
    std::optional<std::int64_t> last_seen_ms_;
    std::int64_t next_heartbeat_ms_ = 0;
    AotTracker aot_;
    TwinCounters counters_;
    std::vector<SimRecord> records_;
    std::set<std::int64_t> kpi_seconds_;
    std::map<std::string, PushState> pushes_;
};

} // namespace dtran::sync

#pragma once

#include "dtran/sync_endpoints.h"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dtran::sync {

struct SessionConfig
{
    SyncConfig sync;
    ChannelSpec downlink;
    ChannelSpec uplink;
};

/// Physical world, lossy channel pair and twin ingester on one virtual
/// clock. Physical ticks happen every 100 ms; twin-side deliveries and
/// timers are processed at their exact millisecond.
class SyncSession
{
  public:
    SyncSession(World world, SessionConfig cfg);
    SyncSession(const SyncSession&) = delete;
    SyncSession& operator=(const SyncSession&) = delete;

    /// Sends the opening frames. Called implicitly by run_until() and
    /// push_config(); explicit calls let taps see the handshake.
    void start();

    /// Processes every event with time <= t_ms.
    void run_until(std::int64_t t_ms);

    std::int64_t now_ms() const { return now_ms_; }

    /// Starts a config push from the twin side.
    void push_config(const std::string& txn_id, const ChangeSet& changes);

    World& world() { return world_; }
    const World& world() const { return world_; }
    twin::TwinStore& store() { return store_; }
    const twin::TwinStore& store() const { return store_; }
    PhysicalEndpoint& physical() { return *physical_; }
    TwinEndpoint& twin() { return *twin_; }
    const TwinEndpoint& twin() const { return *twin_; }
    Channel& downlink() { return down_; }
    Channel& uplink() { return up_; }
    const Channel& downlink() const { return down_; }
    const Channel& uplink() const { return up_; }
    const SessionConfig& config() const { return cfg_; }

    /// Twin-vs-physical comparisons made right after each SNAPSHOT_FULL.
    std::uint64_t snapshot_checks() const { return snapshot_checks_; }
    std::uint64_t snapshot_mismatches() const { return snapshot_mismatches_; }

    /// Called after every physical tick, before its emissions are delivered.
    std::function<void(std::int64_t t_ms)> on_tick;

    /// Records every frame sent in either direction, in send order.
    void record_transcript(std::vector<std::string>* lines);

  private:
    void send_down(const std::vector<SyncMessage>& msgs, std::int64_t t_ms);
    void send_up(const std::vector<SyncMessage>& msgs, std::int64_t t_ms);

    SessionConfig cfg_;
    World world_;
    twin::TwinStore store_;
    Channel down_;
    Channel up_;
    std::unique_ptr<PhysicalEndpoint> physical_;
    std::unique_ptr<TwinEndpoint> twin_;
    std::int64_t now_ms_ = 0;
    bool started_ = false;
    std::uint64_t snapshot_checks_ = 0;
    std::uint64_t snapshot_mismatches_ = 0;
};

} // namespace dtran::sync

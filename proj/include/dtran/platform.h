#pragma once

#include "dtran/optimizer.h"
#include "dtran/sync_session.h"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran::platform {

enum class OptimizeMethod
{
    none,
    local,
    qlearn,
    exhaustive,
};

const char* optimize_method_name(OptimizeMethod m);
/// Throws std::invalid_argument for unknown names.
OptimizeMethod optimize_method_from_name(const std::string& s);

struct OptimizeSettings
{
    OptimizeMethod method = OptimizeMethod::none;
    /// Trigger time of the automatic run; unset means half the duration.
    std::optional<double> at_s;
    /// Parameters the search may move, on every cell.
    std::vector<CellParam> params{CellParam::tilt};
    /// Restrict the search to these cells; empty means all.
    std::vector<CellId> cells;
    double horizon_s = 10.0;
    int replications = 1;
    std::size_t budget_evals = 200;
    opt::QLearnParams qlearn;
};

struct PlatformConfig
{
    Topology topology = default_desk_topology(42);
    double duration_s = 300.0;
    sync::SessionConfig session;
    opt::UtilitySpec utility;
    opt::GateParams gate;
    opt::WatchdogParams watchdog;
    OptimizeSettings optimize;
    /// Push gate-accepted changes to the network.
    bool closed_loop = true;
    double kpi_window_s = 10.0;
    double fidelity_window_s = 60.0;
    bool fidelity = true;
    /// Emit the raw per-second KPI records as KPI_SAMPLES events.
    bool kpi_samples = true;
};

/// Channel seeds derived from the run seed.
sync::SessionConfig default_session(std::uint64_t seed);

nlohmann::json platform_config_to_json(const PlatformConfig& c);
/// Overlays a config document on `base`. Unknown keys are errors.
PlatformConfig platform_config_from_json(const nlohmann::json& j, PlatformConfig base = {});
PlatformConfig load_platform_config(const std::filesystem::path& path, PlatformConfig base = {});

/// Self-describing stream entry. `seq` is dense from 1.
struct Event
{
    std::uint64_t seq = 0;
    std::string type;
    std::int64_t t_ms = 0;
    std::uint64_t twin_version = 0;
    nlohmann::json data = nlohmann::json::object();
};

nlohmann::json event_to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);
std::string event_line(const Event& e);

enum class JobKind
{
    whatif,
    optimize,
    apply,
};

enum class JobStatus
{
    queued,
    running,
    done,
    failed,
};

const char* job_kind_name(JobKind k);
const char* job_status_name(JobStatus s);

struct JobRecord
{
    std::string id;
    JobKind kind = JobKind::whatif;
    JobStatus status = JobStatus::queued;
    std::int64_t created_ms = 0;
    std::optional<std::int64_t> finished_ms;
    nlohmann::json input = nlohmann::json::object();
    nlohmann::json result;
    nlohmann::json error;
    std::string txn_id;
};

nlohmann::json job_to_json(const JobRecord& j);

/// Thread-safe job registry. Status only moves forward; every transition is
/// written to `<dir>/jobs/<id>.json` when a directory is set.
class JobStore
{
  public:
    explicit JobStore(std::optional<std::filesystem::path> dir = std::nullopt);

    JobRecord create(JobKind kind, nlohmann::json input, std::int64_t t_ms);
    /// Throws std::logic_error on a backward transition.
    JobRecord start(const std::string& id);
    JobRecord finish(const std::string& id, nlohmann::json result, std::int64_t t_ms);
    JobRecord fail(const std::string& id, nlohmann::json error, std::int64_t t_ms);
    void set_txn(const std::string& id, const std::string& txn_id);

    std::optional<JobRecord> get(const std::string& id) const;
    std::vector<JobRecord> all() const;

  private:
    JobRecord transition(const std::string& id, JobStatus to, std::function<void(JobRecord&)> fill);
    void persist(const JobRecord& j) const;

    mutable std::mutex mu_;
    std::optional<std::filesystem::path> dir_;
    std::map<std::string, JobRecord> jobs_;
    std::uint64_t next_ = 1;
};

struct FidelityWindow
{
    double t_start_s = 0.0;
    double t_end_s = 0.0;
    double score = 0.0;
    std::vector<KpiWindow> predicted;
    std::vector<KpiWindow> actual;
};

/// Search plus gate, computed away from the live platform.
struct OptimizeOutcome
{
    OptimizeSettings settings;
    std::uint64_t twin_version = 0;
    std::int64_t t0_ms = 0;
    ChangeSet changes;
    double utility_base = 0.0;
    double utility_best = 0.0;
    std::size_t evaluations = 0;
    nlohmann::json search;
    nlohmann::json qtable;
    opt::GateDecision gate;
    /// Twin image the scenario was built from.
    nlohmann::json twin_snapshot;
};

/// Throws OptimizerError for an empty coordinate set or an oversize lattice.
OptimizeOutcome run_optimization(const opt::Scenario& s,
                                 const OptimizeSettings& settings,
                                 const opt::UtilitySpec& spec,
                                 const opt::GateParams& gate,
                                 std::uint64_t search_seed);

struct TxnInfo
{
    std::string txn_id;
    std::string job_id;
    ChangeSet changes;
    ConfigMap pre_apply;
    bool rollback = false;
    sync::PushStatus status = sync::PushStatus::pending;
    std::optional<std::int64_t> applied_t_ms;
    /// Twin image at push time, before the change reached the network.
    std::shared_ptr<const twin::TwinGraph> pre_apply_twin;
};

/// Physical network, twin and optimizer on one virtual clock: the
/// closed loop. Not thread-safe; callers serialise access.
class Platform
{
  public:
    explicit Platform(PlatformConfig cfg, JobStore* jobs = nullptr);
    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    /// One 100 ms tick of virtual time.
    void step();
    void run_until(std::int64_t t_ms);
    /// Runs to the configured duration.
    void run();
    std::int64_t now_ms() const { return now_ms_; }
    std::int64_t end_ms() const;
    bool finished() const { return now_ms_ >= end_ms(); }

    const PlatformConfig& config() const { return cfg_; }
    sync::SyncSession& session() { return session_; }
    const sync::SyncSession& session() const { return session_; }
    const twin::TwinStore& store() const { return session_.store(); }
    JobStore& jobs() { return *jobs_; }

    /// What-if starting point from the current twin state.
    opt::Scenario scenario() const;
    /// Current mirrored configuration.
    ConfigMap twin_configs() const;

    twin::TwinMetrics metrics() const;
    /// Metrics plus twin version, clock and availability flags.
    nlohmann::json metrics_json() const;
    const std::vector<KpiWindow>& kpi_windows() const { return kpi_windows_; }
    /// Twin-side KPI history re-aggregated into windows of `window_s`.
    std::vector<KpiWindow> kpi_series(double window_s) const;
    nlohmann::json topology_json() const;
    const std::vector<FidelityWindow>& fidelity_windows() const { return fidelity_; }

    const std::vector<Event>& events() const { return events_; }
    /// Called for every event as it is appended.
    std::function<void(const Event&)> on_event;

    /// Starts a config push under a new apply job. `input` is recorded
    /// with the job. Returns the transaction id.
    std::string push(const ChangeSet& changes,
                     nlohmann::json input = nlohmann::json::object(),
                     bool rollback = false,
                     std::optional<std::string> txn_id = std::nullopt);
    const TxnInfo* txn(const std::string& txn_id) const;
    std::optional<std::string> inflight_txn() const;

    /// Runs the configured search, the gate and (closed loop) the push.
    /// Returns the optimize job id.
    std::string optimize_now();
    std::string optimize_now(const OptimizeSettings& settings);
    /// Split form for callers that search off the platform lock.
    /// Creates the optimize job in the queued state.
    std::string begin_optimize(const OptimizeSettings& settings);
    void finish_optimize(const std::string& job_id, const OptimizeOutcome& outcome, bool push_accepted);

    /// Job transitions that also announce themselves on the event stream.
    std::string create_job(JobKind kind, nlohmann::json input);
    void start_job(const std::string& job_id);
    void finish_job(const std::string& job_id, nlohmann::json result);
    void fail_job(const std::string& job_id, const std::string& code, const std::string& message, nlohmann::json detail);
    std::uint64_t search_seed() const;
    const nlohmann::json& last_qtable() const { return qtable_; }
    /// Full record of the last optimization, including the twin image it
    /// started from; null before the first one.
    const nlohmann::json& optimization() const { return optimization_; }

    nlohmann::json report() const;

    /// Emits an event stamped with the current clock and twin version.
    const Event& emit(const std::string& type, nlohmann::json data);

  private:
    void handle_kpi(const std::vector<SimRecord>& records, std::int64_t t_end_ms);
    void handle_state(std::int64_t state_t_ms);
    void handle_push(const sync::PushState& p);
    void check_watchdog(std::int64_t kpi_t_ms);
    void emit_kpi(const std::string& type, nlohmann::json data);
    void flush_held();
    void mark_applied(TxnInfo& t, std::int64_t applied_t_ms);

  public:
    /// Utility of the twin's KPI records over (from, to].
    double measured_utility(std::int64_t from_ms, std::int64_t to_ms) const;
    /// Watchdog baseline: the pre-apply twin image replayed with the
    /// pre-apply configs on the shared mobility seed over (applied,
    /// applied + window]. Without mirrored UEs (L0) it falls back to the
    /// measured utility of the window before the apply.
    double counterfactual_utility(const TxnInfo& t, std::int64_t applied_t_ms) const;
    std::size_t ue_count() const;

  private:

    PlatformConfig cfg_;
    std::unique_ptr<JobStore> own_jobs_;
    JobStore* jobs_;
    sync::SyncSession session_;
    std::int64_t now_ms_ = 0;
    std::vector<Event> events_;
    std::vector<KpiWindow> kpi_windows_;
    std::int64_t next_kpi_window_ms_ = 0;
    std::int64_t next_metrics_ms_ = 0;

    struct PendingFidelity
    {
        std::int64_t start_ms = 0;
        std::vector<KpiWindow> predicted;
    };
    std::optional<PendingFidelity> fid_pending_;
    std::int64_t next_fid_start_ms_ = 0;
    std::vector<FidelityWindow> fidelity_;

    bool optimized_ = false;
    std::uint64_t next_txn_ = 1;
    std::map<std::string, TxnInfo> txns_;
    std::vector<std::string> txn_order_;
    opt::RollbackWatchdog watchdog_;
    std::optional<opt::RollbackWatchdog::Decision> watchdog_decision_;
    std::string watchdog_txn_;
    nlohmann::json optimization_ = nullptr;
    nlohmann::json qtable_ = nullptr;
    /// KPI events held back while a push is unresolved.
    std::vector<std::pair<std::string, nlohmann::json>> held_;
};

/// KPI windows as CSV (header only when empty).
std::string kpi_csv(const std::vector<KpiWindow>& windows);

/// report.json, events.ndjson and kpis.csv, plus optimization.json and
/// qtable.json when the run produced them.
void write_run_artifacts(const Platform& p, const std::filesystem::path& dir);

} // namespace dtran::platform

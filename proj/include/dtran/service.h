#pragma once

#include "dtran/platform.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace dtran::service {

/// One of bad_request, not_found, conflict, unsupported_tier,
/// gate_rejected, timeout.
struct ApiError
{
    std::string code;
    std::string message;
    nlohmann::json detail = nlohmann::json::object();
};

int http_status(const std::string& code);
nlohmann::json api_error_json(const ApiError& e);

struct Response
{
    int status = 200;
    nlohmann::json body;
};

Response error_response(const ApiError& e);

/// Fan-out of platform events with a bounded queue per subscriber. A full
/// queue drops its oldest entry; the subscriber then sees a GAP marker
/// followed by a METRICS_FULL resync before the next live event.
class EventHub
{
  public:
    static constexpr std::size_t kDefaultCapacity = 1024;

    /// `full_metrics` produces the resync payload; called with no hub lock
    /// held by the caller's own locking discipline.
    explicit EventHub(std::function<nlohmann::json()> full_metrics, std::size_t capacity = kDefaultCapacity);

    /// A new subscriber starts with a METRICS_FULL event.
    std::uint64_t subscribe();
    void unsubscribe(std::uint64_t id);
    void publish(const nlohmann::json& event);

    /// Pops queued events, waiting up to `timeout` for the first one.
    /// Returns nullopt once the subscriber is gone or the hub is closed.
    std::optional<std::vector<nlohmann::json>> take(std::uint64_t id, std::chrono::milliseconds timeout);

    /// Recent history for long-poll clients: events with seq > since, capped
    /// at the buffer size. A `since` older than the buffer yields a GAP
    /// marker and METRICS_FULL first; no `since` yields METRICS_FULL only.
    nlohmann::json poll(std::optional<std::uint64_t> since, std::chrono::milliseconds timeout);

    void close();
    std::size_t capacity() const { return capacity_; }
    std::uint64_t last_seq() const;
    std::size_t subscribers() const;

  private:
    struct Sub
    {
        std::deque<nlohmann::json> queue;
        std::uint64_t dropped = 0;
        std::uint64_t last_dropped_seq = 0;
    };
    nlohmann::json metrics_full() const;

    std::function<nlohmann::json()> full_metrics_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::uint64_t, Sub> subs_;
    std::deque<nlohmann::json> history_;
    std::uint64_t next_sub_ = 1;
    std::uint64_t last_seq_ = 0;
    bool closed_ = false;
};

struct ServiceOptions
{
    platform::PlatformConfig config;
    std::optional<std::filesystem::path> data_dir;
    /// Virtual milliseconds per wall millisecond when paced; 0 leaves the
    /// clock to advance().
    double speed = 0.0;
    std::size_t event_capacity = EventHub::kDefaultCapacity;
};

/// The operational shell around one Platform: request routing, the job
/// worker, the event hub and the clock.
class Service
{
  public:
    explicit Service(ServiceOptions opts);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Routes one API request. Never throws; failures become ApiError bodies.
    Response handle(const std::string& method,
                    const std::string& path,
                    const std::map<std::string, std::string>& query,
                    const std::string& body);

    /// Manual clock: steps the platform by `ms` of virtual time.
    void advance(std::int64_t ms);
    /// Starts the pacer thread (speed > 0).
    void start_clock();
    void stop();

    /// Blocks until the job queue is empty and no job is executing.
    void wait_idle();

    EventHub& hub() { return *hub_; }
    /// Runs `fn` with the platform lock held.
    template <typename Fn>
    auto with_platform(Fn&& fn)
    {
        std::lock_guard lock(mu_);
        return fn(*platform_);
    }
    platform::JobStore& jobs() { return jobs_; }
    const ServiceOptions& options() const { return opts_; }

    /// Writes report.json, events.ndjson and kpis.csv to the data directory.
    void persist_run() const;

  private:
    Response route(const std::string& method,
                   const std::string& path,
                   const std::map<std::string, std::string>& query,
                   const std::string& body);
    Response get_job(const std::string& id, std::optional<platform::JobKind> kind);
    Response post_whatif(const nlohmann::json& body);
    Response post_optimize(const nlohmann::json& body);
    Response post_apply(const nlohmann::json& body);
    Response post_rollback(const nlohmann::json& body);
    Response get_kpis(const std::map<std::string, std::string>& query);
    Response await_push(std::unique_lock<std::mutex>& lock, const std::string& txn_id, nlohmann::json extra);

    void enqueue(std::function<void()> job);
    void worker_loop();
    void clock_loop();

    ServiceOptions opts_;
    platform::JobStore jobs_;
    mutable std::mutex mu_;
    std::condition_variable push_cv_;
    std::unique_ptr<platform::Platform> platform_;
    std::unique_ptr<EventHub> hub_;

    std::mutex job_mu_;
    std::condition_variable job_cv_;
    std::deque<std::function<void()>> job_queue_;
    bool job_busy_ = false;
    bool stopping_ = false;
    std::thread worker_;
    std::thread clock_;
    std::atomic<bool> clock_running_{false};
};

/// "host:port"; a bare port binds 127.0.0.1. Throws std::invalid_argument.
std::pair<std::string, int> parse_bind(const std::string& s);

/// Blocking HTTP front end. Returns false if the socket could not be bound.
/// `on_bound` receives the actual port (useful with port 0).
bool serve_http(Service& service,
                const std::string& host,
                int port,
                const std::function<void(int port)>& on_bound = {},
                std::atomic<bool>* stop_flag = nullptr);

} // namespace dtran::service

#include "dtran/service.h"

#include <algorithm>
#include <cmath>

namespace dtran::service {

using platform::JobKind;
using platform::Platform;

int
http_status(const std::string& code)
{
    static const std::map<std::string, int> table{{"bad_request", 400},      {"not_found", 404},
                                                  {"conflict", 409},         {"unsupported_tier", 422},
                                                  {"gate_rejected", 422},    {"timeout", 504}};
    auto it = table.find(code);
    return it == table.end() ? 500 : it->second;
}

nlohmann::json
api_error_json(const ApiError& e)
{
    return {{"error", {{"code", e.code}, {"message", e.message}, {"detail", e.detail}}}};
}

Response
error_response(const ApiError& e)
{
    return {http_status(e.code), api_error_json(e)};
}

namespace {

struct Fail
{
    ApiError error;
};

[[noreturn]] void
fail(std::string code, std::string message, nlohmann::json detail = nlohmann::json::object())
{
    throw Fail{{std::move(code), std::move(message), std::move(detail)}};
}

std::string
api_code(const std::string& optimizer_code)
{
    if (optimizer_code == "unsupported_tier" || optimizer_code == "conflict" || optimizer_code == "timeout" ||
        optimizer_code == "not_found" || optimizer_code == "gate_rejected")
    {
        return optimizer_code;
    }
    if (optimizer_code == "version_mismatch")
    {
        return "conflict";
    }
    return "bad_request";
}

nlohmann::json
parse_body(const std::string& body)
{
    if (body.empty())
    {
        return nlohmann::json::object();
    }
    try
    {
        auto j = nlohmann::json::parse(body);
        if (!j.is_object())
        {
            fail("bad_request", "request body must be a JSON object");
        }
        return j;
    }
    catch (const nlohmann::json::parse_error& e)
    {
        fail("bad_request", std::string("malformed JSON: ") + e.what());
    }
}

/// Entries are {"cell_id": n, "config": {...}}; the config may name only
/// the fields to change, the rest comes from the current twin state.
ChangeSet
resolve_changes(const nlohmann::json& changes, const ConfigMap& current)
{
    if (!changes.is_array())
    {
        fail("bad_request", "changes must be an array", {{"field", "changes"}});
    }
    ChangeSet out;
    for (std::size_t i = 0; i < changes.size(); ++i)
    {
        const auto& c = changes[i];
        const auto where = "changes[" + std::to_string(i) + "]";
        if (!c.is_object() || !c.contains("cell_id") || !c.at("cell_id").is_number_unsigned())
        {
            fail("bad_request", where + " needs an unsigned cell_id", {{"field", "cell_id"}});
        }
        const auto cell = c.at("cell_id").get<CellId>();
        auto it = current.find(cell);
        if (it == current.end())
        {
            fail("bad_request", "cell " + std::to_string(cell) + " is not in the topology",
                 {{"field", "cell_id"}, {"cell", cell}});
        }
        if (!c.contains("config") || !c.at("config").is_object())
        {
            fail("bad_request", where + " needs a config object", {{"field", "config"}, {"cell", cell}});
        }
        nlohmann::json merged = it->second;
        for (const auto& [k, v] : c.at("config").items())
        {
            if (!merged.contains(k))
            {
                fail("bad_request", "unknown config field " + k, {{"field", k}, {"cell", cell}});
            }
            merged[k] = v;
        }
        CellChange ch;
        ch.cell_id = cell;
        try
        {
            ch.config = merged.get<CellConfig>();
        }
        catch (const std::exception& e)
        {
            fail("bad_request", e.what(), {{"cell", cell}});
        }
        out.push_back(ch);
    }
    return out;
}

nlohmann::json
gate_json(const opt::GateDecision& g)
{
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < g.report.replications.size(); ++i)
    {
        const auto& r = g.report.replications[i];
        per.push_back({{"replication", i},
                       {"seed", r.seed},
                       {"utility_before", r.utility_before},
                       {"utility_after", r.utility_after},
                       {"constraints", opt::constraint_check_to_json(r.constraints_after)}});
    }
    return {{"accepted", g.accepted},
            {"reason", g.reason},
            {"mean_improvement", g.mean_improvement},
            {"utility_before", g.report.utility_before},
            {"utility_after", g.report.utility_after},
            {"replications", per}};
}

std::vector<std::string>
split_path(const std::string& path)
{
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size())
    {
        auto j = path.find('/', i);
        if (j == std::string::npos)
        {
            j = path.size();
        }
        if (j > i)
        {
            parts.push_back(path.substr(i, j - i));
        }
        i = j + 1;
    }
    return parts;
}

std::optional<std::uint64_t>
parse_uint(const std::map<std::string, std::string>& q, const std::string& key)
{
    auto it = q.find(key);
    if (it == q.end() || it->second.empty())
    {
        return std::nullopt;
    }
    try
    {
        std::size_t used = 0;
        const auto v = std::stoull(it->second, &used);
        if (used != it->second.size() || it->second[0] == '-')
        {
            throw std::invalid_argument(key);
        }
        return v;
    }
    catch (const std::exception&)
    {
        fail("bad_request", key + " must be a non-negative integer", {{"field", key}});
    }
}

} // namespace

EventHub::EventHub(std::function<nlohmann::json()> full_metrics, std::size_t capacity)
    : full_metrics_(std::move(full_metrics))
    , capacity_(std::max<std::size_t>(capacity, 1))
{
}

nlohmann::json
EventHub::metrics_full() const
{
    return full_metrics_();
}

std::uint64_t
EventHub::subscribe()
{
    std::uint64_t id = 0;
    {
        std::lock_guard lock(mu_);
        id = next_sub_++;
        subs_[id];
    }
    auto full = metrics_full();
    std::lock_guard lock(mu_);
    auto it = subs_.find(id);
    if (it != subs_.end())
    {
        it->second.queue.push_front(std::move(full));
    }
    cv_.notify_all();
    return id;
}

void
EventHub::unsubscribe(std::uint64_t id)
{
    std::lock_guard lock(mu_);
    subs_.erase(id);
    cv_.notify_all();
}

void
EventHub::publish(const nlohmann::json& event)
{
    std::lock_guard lock(mu_);
    last_seq_ = event.value("seq", last_seq_);
    history_.push_back(event);
    if (history_.size() > capacity_)
    {
        history_.pop_front();
    }
    for (auto& [id, s] : subs_)
    {
        s.queue.push_back(event);
        while (s.queue.size() > capacity_)
        {
            s.last_dropped_seq = s.queue.front().value("seq", s.last_dropped_seq);
            s.queue.pop_front();
            ++s.dropped;
        }
    }
    cv_.notify_all();
}

std::optional<std::vector<nlohmann::json>>
EventHub::take(std::uint64_t id, std::chrono::milliseconds timeout)
{
    std::vector<nlohmann::json> out;
    std::uint64_t dropped = 0;
    std::uint64_t last_dropped = 0;
    {
        std::unique_lock lock(mu_);
        auto has_data = [&] {
            auto it = subs_.find(id);
            return closed_ || it == subs_.end() || !it->second.queue.empty() || it->second.dropped > 0;
        };
        cv_.wait_for(lock, timeout, has_data);
        auto it = subs_.find(id);
        if (closed_ || it == subs_.end())
        {
            return std::nullopt;
        }
        auto& s = it->second;
        dropped = s.dropped;
        last_dropped = s.last_dropped_seq;
        s.dropped = 0;
        out.assign(std::make_move_iterator(s.queue.begin()), std::make_move_iterator(s.queue.end()));
        s.queue.clear();
    }
    if (dropped > 0)
    {
        auto full = metrics_full();
        nlohmann::json gap{{"seq", 0},
                           {"type", "GAP"},
                           {"t_ms", full.value("t_ms", 0)},
                           {"twin_version", full.value("twin_version", 0)},
                           {"data", {{"dropped", dropped}, {"last_dropped_seq", last_dropped}}}};
        out.insert(out.begin(), {gap, full});
    }
    return out;
}

nlohmann::json
EventHub::poll(std::optional<std::uint64_t> since, std::chrono::milliseconds timeout)
{
    std::vector<nlohmann::json> out;
    bool gap = false;
    std::uint64_t first_kept = 0;
    std::uint64_t next = 0;
    {
        std::unique_lock lock(mu_);
        if (since)
        {
            cv_.wait_for(lock, timeout, [&] { return closed_ || last_seq_ > *since; });
            first_kept = history_.empty() ? last_seq_ + 1 : history_.front().value("seq", std::uint64_t{0});
            gap = *since + 1 < first_kept;
            for (const auto& e : history_)
            {
                if (e.value("seq", std::uint64_t{0}) > *since)
                {
                    out.push_back(e);
                }
            }
        }
        next = last_seq_;
    }
    if (!since || gap)
    {
        auto full = metrics_full();
        std::vector<nlohmann::json> head;
        if (gap)
        {
            head.push_back({{"seq", 0},
                            {"type", "GAP"},
                            {"t_ms", full.value("t_ms", 0)},
                            {"twin_version", full.value("twin_version", 0)},
                            {"data", {{"dropped", first_kept - *since - 1}, {"last_dropped_seq", first_kept - 1}}}});
        }
        head.push_back(std::move(full));
        out.insert(out.begin(), head.begin(), head.end());
    }
    return {{"events", out}, {"next_since", next}};
}

void
EventHub::close()
{
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
}

std::uint64_t
EventHub::last_seq() const
{
    std::lock_guard lock(mu_);
    return last_seq_;
}

std::size_t
EventHub::subscribers() const
{
    std::lock_guard lock(mu_);
    return subs_.size();
}

Service::Service(ServiceOptions opts)
    : opts_(std::move(opts))
    , jobs_(opts_.data_dir)
{
    platform_ = std::make_unique<Platform>(opts_.config, &jobs_);
    hub_ = std::make_unique<EventHub>(
        [this] {
            std::lock_guard lock(mu_);
            return nlohmann::json{{"seq", 0},
                                  {"type", "METRICS_FULL"},
                                  {"t_ms", platform_->session().now_ms()},
                                  {"twin_version", platform_->store().read()->version()},
                                  {"data", platform_->metrics_json()}};
        },
        opts_.event_capacity);
    for (const auto& e : platform_->events())
    {
        hub_->publish(platform::event_to_json(e));
    }
    platform_->on_event = [this](const platform::Event& e) {
        hub_->publish(platform::event_to_json(e));
        push_cv_.notify_all();
    };
    worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service()
{
    stop();
}

void
Service::stop()
{
    clock_running_ = false;
    if (clock_.joinable())
    {
        clock_.join();
    }
    {
        std::lock_guard lock(job_mu_);
        stopping_ = true;
    }
    job_cv_.notify_all();
    if (worker_.joinable())
    {
        worker_.join();
    }
    hub_->close();
    push_cv_.notify_all();
}

void
Service::advance(std::int64_t ms)
{
    std::lock_guard lock(mu_);
    platform_->run_until(platform_->now_ms() + ms);
    push_cv_.notify_all();
}

void
Service::start_clock()
{
    if (opts_.speed <= 0.0 || clock_running_)
    {
        return;
    }
    clock_running_ = true;
    clock_ = std::thread([this] { clock_loop(); });
}

void
Service::clock_loop()
{
    const auto tick = std::chrono::duration<double, std::milli>(static_cast<double>(kTickMs) / opts_.speed);
    auto next = std::chrono::steady_clock::now();
    while (clock_running_)
    {
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(tick);
        std::this_thread::sleep_until(next);
        std::lock_guard lock(mu_);
        if (!platform_->finished())
        {
            platform_->step();
        }
        push_cv_.notify_all();
    }
}

void
Service::enqueue(std::function<void()> job)
{
    {
        std::lock_guard lock(job_mu_);
        job_queue_.push_back(std::move(job));
    }
    job_cv_.notify_all();
}

void
Service::worker_loop()
{
    while (true)
    {
        std::function<void()> job;
        {
            std::unique_lock lock(job_mu_);
            job_cv_.wait(lock, [&] { return stopping_ || !job_queue_.empty(); });
            if (job_queue_.empty())
            {
                return;
            }
            job = std::move(job_queue_.front());
            job_queue_.pop_front();
            job_busy_ = true;
        }
        job();
        {
            std::lock_guard lock(job_mu_);
            job_busy_ = false;
        }
        job_cv_.notify_all();
    }
}

void
Service::wait_idle()
{
    std::unique_lock lock(job_mu_);
    job_cv_.wait(lock, [&] { return stopping_ || (job_queue_.empty() && !job_busy_); });
}

void
Service::persist_run() const
{
    if (!opts_.data_dir)
    {
        return;
    }
    std::lock_guard lock(mu_);
    platform::write_run_artifacts(*platform_, *opts_.data_dir);
}

Response
Service::handle(const std::string& method,
                const std::string& path,
                const std::map<std::string, std::string>& query,
                const std::string& body)
{
    try
    {
        return route(method, path, query, body);
    }
    catch (const Fail& f)
    {
        return error_response(f.error);
    }
    catch (const opt::OptimizerError& e)
    {
        return error_response({api_code(e.code()), e.what(), e.detail()});
    }
    catch (const twin::TwinError& e)
    {
        return error_response({"conflict", std::string("twin not ready: ") + e.what()});
    }
    catch (const std::invalid_argument& e)
    {
        return error_response({"bad_request", e.what()});
    }
    catch (const nlohmann::json::exception& e)
    {
        return error_response({"bad_request", e.what()});
    }
    catch (const std::exception& e)
    {
        return error_response({"conflict", e.what()});
    }
}

Response
Service::route(const std::string& method,
               const std::string& path,
               const std::map<std::string, std::string>& query,
               const std::string& body)
{
    const auto parts = split_path(path);
    if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1")
    {
        fail("not_found", "no such endpoint " + path);
    }
    const std::string& res = parts[2];
    const auto sub = parts.size() > 3 ? std::optional<std::string>(parts[3]) : std::nullopt;
    if (parts.size() > 4)
    {
        fail("not_found", "no such endpoint " + path);
    }

    if (method == "GET")
    {
        if (res == "topology" && !sub)
        {
            std::lock_guard lock(mu_);
            return {200, platform_->topology_json()};
        }
        if (res == "kpis" && !sub)
        {
            return get_kpis(query);
        }
        if (res == "metrics" && sub == "twin")
        {
            std::lock_guard lock(mu_);
            return {200, platform_->metrics_json()};
        }
        if (res == "report" && !sub)
        {
            std::lock_guard lock(mu_);
            return {200, platform_->report()};
        }
        if (res == "qtable" && !sub)
        {
            std::lock_guard lock(mu_);
            if (platform_->last_qtable().is_null())
            {
                fail("not_found", "no q-learning run yet");
            }
            return {200, platform_->last_qtable()};
        }
        if (res == "parameter-domains" && !sub)
        {
            return {200, parameter_domains_json()};
        }
        if (res == "jobs")
        {
            if (!sub)
            {
                nlohmann::json all = nlohmann::json::array();
                for (const auto& j : jobs_.all())
                {
                    all.push_back(platform::job_to_json(j));
                }
                return {200, {{"jobs", all}}};
            }
            return get_job(*sub, std::nullopt);
        }
        if ((res == "whatif" || res == "optimize") && sub)
        {
            return get_job(*sub, res == "whatif" ? JobKind::whatif : JobKind::optimize);
        }
        if (res == "events" && !sub)
        {
            const auto since = parse_uint(query, "since");
            const auto timeout = std::min<std::uint64_t>(parse_uint(query, "timeout_ms").value_or(0), 30000);
            return {200, hub_->poll(since, std::chrono::milliseconds(timeout))};
        }
    }
    else if (method == "POST" && !sub)
    {
        const auto j = parse_body(body);
        if (res == "whatif")
        {
            return post_whatif(j);
        }
        if (res == "optimize")
        {
            return post_optimize(j);
        }
        if (res == "apply")
        {
            return post_apply(j);
        }
        if (res == "rollback")
        {
            return post_rollback(j);
        }
    }
    fail("not_found", "no such endpoint " + method + " " + path);
}

Response
Service::get_job(const std::string& id, std::optional<JobKind> kind)
{
    auto j = jobs_.get(id);
    if (!j || (kind && j->kind != *kind))
    {
        fail("not_found", "no such job " + id, {{"job_id", id}});
    }
    return {200, platform::job_to_json(*j)};
}

Response
Service::get_kpis(const std::map<std::string, std::string>& query)
{
    double window_s = opts_.config.kpi_window_s;
    if (auto it = query.find("window_s"); it != query.end())
    {
        try
        {
            std::size_t used = 0;
            window_s = std::stod(it->second, &used);
            if (used != it->second.size())
            {
                throw std::invalid_argument("window_s");
            }
        }
        catch (const std::exception&)
        {
            fail("bad_request", "window_s must be a number", {{"field", "window_s"}});
        }
        if (!(window_s >= 1.0 && window_s <= 86400.0) || std::floor(window_s) != window_s)
        {
            fail("bad_request", "window_s must be a whole number of seconds in [1, 86400]", {{"field", "window_s"}});
        }
    }
    std::lock_guard lock(mu_);
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& k : platform_->kpi_series(window_s))
    {
        auto w = kpi_window_to_json(k);
        w["utility"] = opt::utility(k, opts_.config.utility);
        windows.push_back(w);
    }
    return {200, {{"window_s", window_s}, {"twin_version", platform_->store().read()->version()}, {"windows", windows}}};
}

Response
Service::post_whatif(const nlohmann::json& body)
{
    std::string id;
    opt::Scenario s;
    opt::WhatIfRequest req;
    {
        std::lock_guard lock(mu_);
        if (opts_.config.session.sync.tier == twin::FidelityTier::L0)
        {
            fail("unsupported_tier", "what-if needs tier L1 or L2", {{"tier", "L0"}});
        }
        if (!body.contains("changes"))
        {
            fail("bad_request", "changes is required", {{"field", "changes"}});
        }
        auto resolved = body;
        resolved["changes"] = change_set_to_json(resolve_changes(body.at("changes"), platform_->twin_configs()));
        req = opt::whatif_request_from_json(resolved);
        s = platform_->scenario();
        if (req.base_version && *req.base_version != s.twin_version)
        {
            fail("conflict", "twin is at version " + std::to_string(s.twin_version),
                 {{"base_version", *req.base_version}, {"twin_version", s.twin_version}});
        }
        req.base_version = s.twin_version;
        opt::check_changes(s.topology, req.changes);
        id = platform_->create_job(JobKind::whatif, opt::whatif_request_to_json(req));
    }
    const auto queued = platform::job_to_json(*jobs_.get(id));
    enqueue([this, id, s = std::move(s), req] {
        {
            std::lock_guard lock(mu_);
            platform_->start_job(id);
        }
        try
        {
            auto report = opt::whatif(s, req, opts_.config.utility);
            std::lock_guard lock(mu_);
            platform_->finish_job(id, opt::whatif_report_to_json(report));
        }
        catch (const opt::OptimizerError& e)
        {
            std::lock_guard lock(mu_);
            platform_->fail_job(id, api_code(e.code()), e.what(), e.detail());
        }
        catch (const std::exception& e)
        {
            std::lock_guard lock(mu_);
            platform_->fail_job(id, "conflict", e.what(), nlohmann::json::object());
        }
    });
    return {202, queued};
}

Response
Service::post_optimize(const nlohmann::json& body)
{
    auto o = body;
    const bool apply = o.value("apply", false);
    o.erase("apply");
    if (!o.contains("method"))
    {
        o["method"] = "local";
    }
    platform::OptimizeSettings settings;
    try
    {
        settings = platform::platform_config_from_json({{"optimize", o}}, opts_.config).optimize;
    }
    catch (const std::exception& e)
    {
        fail("bad_request", e.what());
    }
    if (settings.method == platform::OptimizeMethod::none)
    {
        fail("bad_request", "method must be local, qlearn or exhaustive", {{"field", "method"}});
    }
    std::string id;
    {
        std::lock_guard lock(mu_);
        if (opts_.config.session.sync.tier == twin::FidelityTier::L0)
        {
            fail("unsupported_tier", "optimization needs tier L1 or L2", {{"tier", "L0"}});
        }
        if (settings.method == platform::OptimizeMethod::exhaustive)
        {
            auto coords = opt::all_coordinates(platform_->scenario().topology, settings.params);
            if (!settings.cells.empty())
            {
                std::erase_if(coords, [&](const opt::Coordinate& c) {
                    return std::find(settings.cells.begin(), settings.cells.end(), c.cell) == settings.cells.end();
                });
            }
            const auto n = opt::lattice_size(opt::full_axes(coords));
            if (n > opt::kMaxExhaustivePoints)
            {
                fail("bad_request", "lattice too large for exhaustive search",
                     {{"points", n}, {"limit", opt::kMaxExhaustivePoints}});
            }
        }
        id = platform_->begin_optimize(settings);
    }
    const auto queued = platform::job_to_json(*jobs_.get(id));
    enqueue([this, id, settings, apply] {
        std::shared_ptr<const twin::TwinGraph> graph;
        std::uint64_t seed = 0;
        {
            std::lock_guard lock(mu_);
            platform_->start_job(id);
            graph = platform_->store().read();
            seed = platform_->search_seed();
        }
        try
        {
            auto outcome = platform::run_optimization(opt::scenario_from_twin(*graph, opts_.config.session.sync.tier),
                                                      settings, opts_.config.utility, opts_.config.gate, seed);
            outcome.twin_snapshot = twin::snapshot(*graph);
            std::lock_guard lock(mu_);
            platform_->finish_optimize(id, outcome, apply && opts_.config.closed_loop);
        }
        catch (const opt::OptimizerError& e)
        {
            std::lock_guard lock(mu_);
            platform_->fail_job(id, api_code(e.code()), e.what(), e.detail());
        }
        catch (const std::exception& e)
        {
            std::lock_guard lock(mu_);
            platform_->fail_job(id, "conflict", e.what(), nlohmann::json::object());
        }
    });
    return {202, queued};
}

Response
Service::post_apply(const nlohmann::json& body)
{
    std::unique_lock lock(mu_);
    if (opts_.config.session.sync.tier == twin::FidelityTier::L0)
    {
        fail("unsupported_tier", "the apply gate needs tier L1 or L2", {{"tier", "L0"}});
    }
    if (!body.contains("changes"))
    {
        fail("bad_request", "changes is required", {{"field", "changes"}});
    }
    const auto changes = resolve_changes(body.at("changes"), platform_->twin_configs());
    if (changes.empty())
    {
        fail("bad_request", "changes is empty", {{"field", "changes"}});
    }
    const auto s = platform_->scenario();
    opt::check_changes(s.topology, changes);
    if (auto busy = platform_->inflight_txn())
    {
        fail("conflict", "transaction " + *busy + " is in flight", {{"txn_id", *busy}});
    }

    lock.unlock();
    const auto gate = opt::safety_gate(s, changes, opts_.config.utility, opts_.config.gate);
    lock.lock();

    const auto summary = gate_json(gate);
    if (!gate.accepted)
    {
        const auto id = platform_->create_job(JobKind::apply, {{"changes", change_set_to_json(changes)}, {"source", "api"}});
        platform_->start_job(id);
        platform_->fail_job(id, "gate_rejected", "gate rejected: " + gate.reason, summary);
        fail("gate_rejected", "gate rejected: " + gate.reason, {{"job_id", id}, {"gate", summary}});
    }
    if (auto busy = platform_->inflight_txn())
    {
        fail("conflict", "transaction " + *busy + " is in flight", {{"txn_id", *busy}});
    }
    const auto now_cfg = platform_->twin_configs();
    const auto then_cfg = s.topology.config_map();
    for (const auto& c : changes)
    {
        if (now_cfg.at(c.cell_id) != then_cfg.at(c.cell_id))
        {
            fail("conflict", "cell " + std::to_string(c.cell_id) + " changed while the gate ran", {{"cell", c.cell_id}});
        }
    }
    const auto txn = platform_->push(changes, {{"source", "api"}, {"gate", summary}});
    return await_push(lock, txn, {{"gate", summary}});
}

Response
Service::post_rollback(const nlohmann::json& body)
{
    if (!body.contains("txn_id") || !body.at("txn_id").is_string())
    {
        fail("bad_request", "txn_id is required", {{"field", "txn_id"}});
    }
    const auto id = body.at("txn_id").get<std::string>();
    std::unique_lock lock(mu_);
    const auto* t = platform_->txn(id);
    if (!t)
    {
        fail("not_found", "no such transaction " + id, {{"txn_id", id}});
    }
    if (t->rollback)
    {
        fail("bad_request", id + " is itself a rollback", {{"txn_id", id}});
    }
    if (t->status != sync::PushStatus::applied)
    {
        fail("conflict", id + " was not applied", {{"txn_id", id}, {"status", sync::push_status_name(t->status)}});
    }
    const auto rid = id + "-rollback";
    if (platform_->txn(rid))
    {
        fail("conflict", id + " was already rolled back", {{"txn_id", id}, {"rollback_txn", rid}});
    }
    if (auto busy = platform_->inflight_txn())
    {
        fail("conflict", "transaction " + *busy + " is in flight", {{"txn_id", *busy}});
    }
    ChangeSet inverse;
    for (const auto& c : t->changes)
    {
        inverse.push_back({c.cell_id, t->pre_apply.at(c.cell_id)});
    }
    platform_->push(inverse, {{"source", "api"}, {"rollback_of", id}}, true, rid);
    return await_push(lock, rid, {{"rollback_of", id}});
}

Response
Service::await_push(std::unique_lock<std::mutex>& lock, const std::string& txn_id, nlohmann::json extra)
{
    auto resolved = [&] { return platform_->txn(txn_id)->status != sync::PushStatus::pending; };
    if (clock_running_)
    {
        const auto& sc = opts_.config.session;
        const double virtual_ms = static_cast<double>(sc.sync.push_timeout_ms + sc.sync.push_retransmit_ms +
                                                      2 * (sc.downlink.latency_ms + sc.downlink.jitter_ms) + 1000);
        push_cv_.wait_for(lock, std::chrono::milliseconds(static_cast<std::int64_t>(virtual_ms / opts_.speed) + 1000),
                          resolved);
    }
    else
    {
        while (!resolved() && !platform_->finished())
        {
            platform_->step();
        }
    }
    const auto* t = platform_->txn(txn_id);
    bool mirrored = false;
    if (t->status == sync::PushStatus::applied)
    {
        const auto changes = t->changes;
        auto reflected = [&] {
            const auto cfg = platform_->twin_configs();
            return std::all_of(changes.begin(), changes.end(),
                               [&](const CellChange& c) { return cfg.at(c.cell_id) == c.config; });
        };
        const auto& sc = opts_.config.session;
        const auto bound_ms = static_cast<std::int64_t>(1000.0 / sc.sync.twinning_rate_hz) + sc.sync.aot_threshold_ms +
                              sc.sync.snapshot_retry_ms + 2 * (sc.downlink.latency_ms + sc.downlink.jitter_ms);
        if (clock_running_)
        {
            push_cv_.wait_for(lock,
                              std::chrono::milliseconds(static_cast<std::int64_t>(bound_ms / opts_.speed) + 1000),
                              reflected);
        }
        else
        {
            const auto until = platform_->now_ms() + bound_ms;
            while (!reflected() && !platform_->finished() && platform_->now_ms() < until)
            {
                platform_->step();
            }
        }
        mirrored = reflected();
        t = platform_->txn(txn_id);
    }
    nlohmann::json out = std::move(extra);
    out["txn_id"] = txn_id;
    out["job_id"] = t->job_id;
    out["status"] = sync::push_status_name(t->status);
    switch (t->status)
    {
    case sync::PushStatus::applied:
        out["applied_t_ms"] = *t->applied_t_ms;
        out["mirrored"] = mirrored;
        out["twin_version"] = platform_->store().read()->version();
        return {200, out};
    case sync::PushStatus::rejected:
        fail("conflict", "network rejected " + txn_id, out);
    default:
        fail("timeout", "no acknowledgement for " + txn_id, out);
    }
}

std::pair<std::string, int>
parse_bind(const std::string& s)
{
    std::string host = "127.0.0.1";
    std::string port = s;
    if (auto c = s.rfind(':'); c != std::string::npos)
    {
        host = s.substr(0, c);
        port = s.substr(c + 1);
    }
    try
    {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535 || host.empty())
        {
            throw std::invalid_argument(s);
        }
        return {host, p};
    }
    catch (const std::exception&)
    {
        throw std::invalid_argument("bad bind address '" + s + "', expected host:port");
    }
}

} // namespace dtran::service

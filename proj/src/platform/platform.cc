#include "dtran/hashing.h"
#include "dtran/platform.h"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dtran::platform {

namespace {

constexpr std::uint64_t kSearchSeedSalt = 0x7365617263680000ULL;

std::int64_t
to_ms(double s)
{
    return static_cast<std::int64_t>(std::llround(s * 1000.0));
}

double
to_s(std::int64_t ms)
{
    return static_cast<double>(ms) / 1000.0;
}

nlohmann::json
settings_to_json(const OptimizeSettings& s)
{
    PlatformConfig c;
    c.optimize = s;
    return platform_config_to_json(c).at("optimize");
}

nlohmann::json
gate_summary(const opt::GateDecision& g)
{
    return {{"accepted", g.accepted},
            {"reason", g.reason},
            {"mean_improvement", g.mean_improvement},
            {"utility_before", g.report.utility_before},
            {"utility_after", g.report.utility_after},
            {"seeds", g.report.seeds()}};
}

} // namespace

OptimizeOutcome
run_optimization(const opt::Scenario& s,
                 const OptimizeSettings& settings,
                 const opt::UtilitySpec& spec,
                 const opt::GateParams& gate,
                 std::uint64_t search_seed)
{
    auto coords = opt::all_coordinates(s.topology, settings.params);
    if (!settings.cells.empty())
    {
        std::erase_if(coords, [&](const opt::Coordinate& c) {
            return std::find(settings.cells.begin(), settings.cells.end(), c.cell) == settings.cells.end();
        });
    }
    if (coords.empty())
    {
        throw opt::OptimizerError("bad_request", "nothing to optimize: no matching cell parameters");
    }
    OptimizeOutcome out;
    out.settings = settings;
    out.twin_version = s.twin_version;
    out.t0_ms = s.t0_ms;
    opt::ConfigEvaluator eval(s, spec, settings.horizon_s, opt::replication_seeds(search_seed, settings.replications));
    switch (settings.method)
    {
    case OptimizeMethod::local:
    case OptimizeMethod::exhaustive:
    {
        auto r = settings.method == OptimizeMethod::local ? opt::local_search(eval, coords, settings.budget_evals)
                                                          : opt::exhaustive(eval, opt::full_axes(coords));
        out.changes = r.changes;
        out.utility_base = r.utility_base;
        out.utility_best = r.utility_best;
        out.evaluations = r.evaluations;
        out.search = opt::search_result_to_json(r);
        break;
    }
    case OptimizeMethod::qlearn:
    {
        auto r = opt::q_learn(eval, coords, settings.qlearn);
        out.changes = r.changes;
        out.utility_base = r.utility_base;
        out.utility_best = r.utility_best;
        out.evaluations = eval.simulations();
        out.search = opt::qlearn_result_to_json(r);
        out.qtable = out.search.at("qtable");
        out.search.erase("qtable");
        break;
    }
    case OptimizeMethod::none:
        throw opt::OptimizerError("bad_request", "optimize method 'none' runs nothing", {{"field", "method"}});
    }
    out.search["method"] = optimize_method_name(settings.method);
    out.search["seeds"] = eval.seeds();
    out.gate = opt::safety_gate(s, out.changes, spec, gate);
    return out;
}

Platform::Platform(PlatformConfig cfg, JobStore* jobs)
    : cfg_(std::move(cfg))
    , own_jobs_(jobs ? nullptr : std::make_unique<JobStore>())
    , jobs_(jobs ? jobs : own_jobs_.get())
    , session_(World(cfg_.topology), cfg_.session)
    , watchdog_(cfg_.watchdog)
{
    now_ms_ = session_.now_ms();
    next_kpi_window_ms_ = now_ms_;
    next_fid_start_ms_ = now_ms_;
    next_metrics_ms_ = now_ms_ + std::max<std::int64_t>(1, to_ms(1.0 / cfg_.session.sync.twinning_rate_hz));

    auto& twin = session_.twin();
    twin.on_kpi_report = [this](const std::vector<SimRecord>& records, std::int64_t t_end_ms) {
        handle_kpi(records, t_end_ms);
    };
    twin.on_state_applied = [this](std::int64_t state_t_ms, std::int64_t) { handle_state(state_t_ms); };
    twin.on_push_done = [this](const sync::PushState& p) { handle_push(p); };

    if (end_ms() > now_ms_)
    {
        emit("RUN_STARTED",
             {{"seed", cfg_.topology.seed},
              {"duration_s", cfg_.duration_s},
              {"sites", cfg_.topology.sites.size()},
              {"cells", cfg_.topology.cells.size()},
              {"ue_count", cfg_.topology.ue_count},
              {"config", platform_config_to_json(cfg_)}});
    }
}

std::int64_t
Platform::end_ms() const
{
    return to_ms(cfg_.duration_s);
}

std::uint64_t
Platform::search_seed() const
{
    return hash_combine(cfg_.topology.seed, kSearchSeedSalt);
}

std::size_t
Platform::ue_count() const
{
    return cfg_.topology.ue_count;
}

void
Platform::step()
{
    if (finished())
    {
        return;
    }
    const std::int64_t t = std::min(now_ms_ + kTickMs, end_ms());
    session_.run_until(t);
    now_ms_ = t;
    check_watchdog(now_ms_);

    const auto period = std::max<std::int64_t>(1, to_ms(1.0 / cfg_.session.sync.twinning_rate_hz));
    while (next_metrics_ms_ <= now_ms_)
    {
        emit("METRICS", metrics_json());
        next_metrics_ms_ += period;
    }

    if (cfg_.optimize.method != OptimizeMethod::none && !optimized_)
    {
        const auto at = to_ms(cfg_.optimize.at_s.value_or(cfg_.duration_s / 2.0));
        if (now_ms_ >= at)
        {
            optimized_ = true;
            optimize_now();
        }
    }

    if (finished())
    {
        emit("RUN_FINISHED", {{"t_end_ms", now_ms_}, {"kpi_windows", kpi_windows_.size()}});
    }
}

void
Platform::run_until(std::int64_t t_ms)
{
    while (!finished() && now_ms_ < t_ms)
    {
        step();
    }
}

void
Platform::run()
{
    run_until(end_ms());
}

const Event&
Platform::emit(const std::string& type, nlohmann::json data)
{
    Event e;
    e.seq = events_.size() + 1;
    e.type = type;
    e.t_ms = session_.now_ms();
    e.twin_version = session_.store().read()->version();
    e.data = std::move(data);
    events_.push_back(std::move(e));
    if (on_event)
    {
        on_event(events_.back());
    }
    return events_.back();
}

void
Platform::emit_kpi(const std::string& type, nlohmann::json data)
{
    if (inflight_txn())
    {
        held_.emplace_back(type, std::move(data));
        return;
    }
    emit(type, std::move(data));
}

void
Platform::flush_held()
{
    if (inflight_txn())
    {
        return;
    }
    auto held = std::move(held_);
    held_.clear();
    for (auto& [type, data] : held)
    {
        emit(type, std::move(data));
    }
}

opt::Scenario
Platform::scenario() const
{
    return opt::scenario_from_twin(*store().read(), cfg_.session.sync.tier);
}

ConfigMap
Platform::twin_configs() const
{
    auto g = store().read();
    if (g->count(twin::NodeKind::cell) == 0)
    {
        return cfg_.topology.config_map();
    }
    return twin::topology_from_graph(*g).config_map();
}

twin::TwinMetrics
Platform::metrics() const
{
    auto m = session_.twin().metrics(session_.now_ms());
    m.fidelity_score = fidelity_.empty() ? 0.0 : fidelity_.back().score;
    return m;
}

nlohmann::json
Platform::metrics_json() const
{
    auto j = twin::twin_metrics_to_json(metrics());
    const auto& aot = session_.twin().aot();
    j["t_ms"] = session_.now_ms();
    j["twin_version"] = store().read()->version();
    j["synced"] = aot.started();
    j["aot_time_avg_s"] = aot.time_avg_mean_s(session_.now_ms());
    j["aot_peak_s"] = aot.peak_max_s(session_.now_ms());
    j["fidelity_windows"] = fidelity_.size();
    j["awaiting_snapshot"] = session_.twin().awaiting_snapshot();
    return j;
}

std::vector<KpiWindow>
Platform::kpi_series(double window_s) const
{
    const auto& seconds = session_.twin().kpi_seconds();
    if (seconds.empty() || !(window_s > 0.0))
    {
        return {};
    }
    const auto w = to_ms(window_s);
    const auto n = *seconds.rbegin() / w;
    if (n < 1)
    {
        return {};
    }
    return aggregate_series(session_.twin().kpi_records(), 0.0, to_s(n * w), window_s, ue_count());
}

nlohmann::json
Platform::topology_json() const
{
    auto g = store().read();
    const bool synced = g->count(twin::NodeKind::cell) > 0;
    const Topology topo = synced ? twin::topology_from_graph(*g) : cfg_.topology;
    return {{"twin_version", g->version()},
            {"synced", synced},
            {"sites", topo.sites.size()},
            {"cells", topo.cells.size()},
            {"ue_count", topo.ue_count},
            {"topology", topo}};
}

double
Platform::measured_utility(std::int64_t from_ms, std::int64_t to_ms_) const
{
    from_ms = std::max<std::int64_t>(0, from_ms);
    if (to_ms_ <= from_ms)
    {
        return 0.0;
    }
    return opt::utility(aggregate_kpis(session_.twin().kpi_records(), to_s(from_ms), to_s(to_ms_), ue_count()),
                        cfg_.utility);
}

double
Platform::counterfactual_utility(const TxnInfo& t, std::int64_t applied_t_ms) const
{
    const auto w = to_ms(cfg_.watchdog.window_s);
    if (cfg_.session.sync.tier != twin::FidelityTier::L2 || !t.pre_apply_twin ||
        t.pre_apply_twin->count(twin::NodeKind::ue) == 0)
    {
        return measured_utility(applied_t_ms - w, applied_t_ms);
    }
    const auto s = opt::scenario_from_twin(*t.pre_apply_twin, cfg_.session.sync.tier);
    World replica = opt::instantiate(s, t.pre_apply, cfg_.topology.seed);
    replica.run_until(applied_t_ms + w);
    return opt::utility(aggregate_kpis(replica.log(), to_s(applied_t_ms), to_s(applied_t_ms + w), ue_count()),
                        cfg_.utility);
}

void
Platform::handle_kpi(const std::vector<SimRecord>& records, std::int64_t t_end_ms)
{
    if (cfg_.kpi_samples)
    {
        nlohmann::json recs = nlohmann::json::array();
        for (const auto& r : records)
        {
            recs.push_back(record_to_json(r));
        }
        emit_kpi("KPI_SAMPLES", {{"t_start_ms", t_end_ms - 1000}, {"t_end_ms", t_end_ms}, {"records", recs}});
    }

    const auto& log = session_.twin().kpi_records();
    const auto w = to_ms(cfg_.kpi_window_s);
    while (next_kpi_window_ms_ + w <= t_end_ms)
    {
        const auto k = aggregate_kpis(log, to_s(next_kpi_window_ms_), to_s(next_kpi_window_ms_ + w), ue_count());
        kpi_windows_.push_back(k);
        emit_kpi("KPI_WINDOW",
                 {{"window", kpi_window_to_json(k)},
                  {"utility", opt::utility(k, cfg_.utility)},
                  {"constraints", opt::constraint_check_to_json(opt::check_constraints(k, cfg_.utility))}});
        next_kpi_window_ms_ += w;
    }

    const auto fw = to_ms(cfg_.fidelity_window_s);
    if (fid_pending_ && t_end_ms >= fid_pending_->start_ms + fw)
    {
        FidelityWindow f;
        f.t_start_s = to_s(fid_pending_->start_ms);
        f.t_end_s = to_s(fid_pending_->start_ms + fw);
        f.predicted = std::move(fid_pending_->predicted);
        f.actual = aggregate_series(log, f.t_start_s, f.t_end_s, cfg_.kpi_window_s, ue_count());
        f.score = twin::fidelity_score(f.predicted, f.actual);
        next_fid_start_ms_ = fid_pending_->start_ms + fw;
        fid_pending_.reset();
        emit_kpi("FIDELITY", {{"t_start_s", f.t_start_s}, {"t_end_s", f.t_end_s}, {"score", f.score}});
        fidelity_.push_back(std::move(f));
    }
}

void
Platform::handle_state(std::int64_t state_t_ms)
{
    const auto tier = cfg_.session.sync.tier;
    const auto fw = to_ms(cfg_.fidelity_window_s);
    if (!cfg_.fidelity || tier == twin::FidelityTier::L0 || fid_pending_ || state_t_ms < next_fid_start_ms_ ||
        state_t_ms % fw != 0 || state_t_ms + fw > end_ms())
    {
        return;
    }
    const auto s = opt::scenario_from_twin(*store().read(), tier);
    World replica = opt::instantiate(s, s.topology.config_map(), cfg_.topology.seed);
    replica.run_until(state_t_ms + fw);
    PendingFidelity p;
    p.start_ms = state_t_ms;
    p.predicted =
        aggregate_series(replica.log(), to_s(state_t_ms), to_s(state_t_ms + fw), cfg_.kpi_window_s, ue_count());
    fid_pending_ = std::move(p);
}

std::string
Platform::push(const ChangeSet& changes, nlohmann::json input, bool rollback, std::optional<std::string> txn_id)
{
    const std::string id = txn_id ? *txn_id : "txn-" + std::to_string(next_txn_++);
    if (txns_.count(id))
    {
        throw opt::OptimizerError("conflict", "transaction " + id + " already exists", {{"txn_id", id}});
    }
    if (!input.is_object())
    {
        input = {{"source", input}};
    }
    input["changes"] = change_set_to_json(changes);
    input["rollback"] = rollback;
    const auto job_id = create_job(JobKind::apply, input);
    jobs_->set_txn(job_id, id);
    start_job(job_id);

    TxnInfo t;
    t.txn_id = id;
    t.job_id = job_id;
    t.changes = changes;
    t.pre_apply = twin_configs();
    t.rollback = rollback;
    t.pre_apply_twin = store().read();
    txns_[id] = t;
    txn_order_.push_back(id);

    emit("CONFIG_PUSHED",
         {{"txn_id", id}, {"job_id", job_id}, {"changes", change_set_to_json(changes)}, {"rollback", rollback}});
    session_.push_config(id, changes);
    return id;
}

const TxnInfo*
Platform::txn(const std::string& txn_id) const
{
    auto it = txns_.find(txn_id);
    return it == txns_.end() ? nullptr : &it->second;
}

std::optional<std::string>
Platform::inflight_txn() const
{
    for (const auto& id : txn_order_)
    {
        if (txns_.at(id).status == sync::PushStatus::pending)
        {
            return id;
        }
    }
    return std::nullopt;
}

void
Platform::mark_applied(TxnInfo& t, std::int64_t applied_t_ms)
{
    t.status = sync::PushStatus::applied;
    t.applied_t_ms = applied_t_ms;
    emit("CONFIG_APPLIED",
         {{"txn_id", t.txn_id}, {"job_id", t.job_id}, {"applied_t_ms", applied_t_ms}, {"rollback", t.rollback}});
    finish_job(t.job_id, {{"txn_id", t.txn_id}, {"status", "applied"}, {"applied_t_ms", applied_t_ms}});
    if (!t.rollback)
    {
        watchdog_.arm(t.txn_id, counterfactual_utility(t, applied_t_ms), t.pre_apply, applied_t_ms);
        watchdog_txn_ = t.txn_id;
    }
}

void
Platform::handle_push(const sync::PushState& p)
{
    auto it = txns_.find(p.txn_id);
    if (it == txns_.end() || it->second.status != sync::PushStatus::pending)
    {
        return;
    }
    auto& t = it->second;
    const auto now = session_.now_ms();
    switch (p.status)
    {
    case sync::PushStatus::applied:
        mark_applied(t, p.ack.value("applied_t_ms", now));
        break;
    case sync::PushStatus::rejected:
    {
        t.status = sync::PushStatus::rejected;
        nlohmann::json err{{"code", "rejected"},
                           {"reason", p.ack.value("reason", "")},
                           {"field", p.ack.value("field", "")},
                           {"cell", p.ack.contains("cell") ? p.ack.at("cell") : nlohmann::json(nullptr)}};
        emit("CONFIG_REJECTED", {{"txn_id", t.txn_id}, {"job_id", t.job_id}, {"error", err}});
        fail_job(t.job_id, "bad_request", "network rejected " + t.txn_id, err);
        break;
    }
    case sync::PushStatus::timeout:
        t.status = sync::PushStatus::timeout;
        emit("PUSH_TIMEOUT", {{"txn_id", t.txn_id}, {"job_id", t.job_id}, {"transmissions", p.transmissions}});
        fail_job(t.job_id, "timeout", "no acknowledgement for " + t.txn_id, {{"transmissions", p.transmissions}});
        if (t.rollback)
        {
            watchdog_.rollback_timed_out();
            emit("ALARM", {{"txn_id", t.txn_id}, {"reason", "rollback_timeout"}, {"manual_intervention", true}});
        }
        break;
    case sync::PushStatus::pending:
        return;
    }
    flush_held();
}

void
Platform::check_watchdog(std::int64_t)
{
    if (!watchdog_.armed())
    {
        return;
    }
    const auto& seconds = session_.twin().kpi_seconds();
    if (seconds.empty() || *seconds.rbegin() < watchdog_.due_ms())
    {
        return;
    }
    const auto applied = txns_.at(watchdog_txn_).applied_t_ms.value_or(0);
    const auto due = watchdog_.due_ms();
    const auto d = watchdog_.evaluate(measured_utility(applied, due), twin_configs());
    watchdog_decision_ = d;
    emit("WATCHDOG",
         {{"txn_id", watchdog_txn_},
          {"verdict", opt::watchdog_verdict_name(d.verdict)},
          {"baseline", d.baseline},
          {"post", d.post},
          {"rho", cfg_.watchdog.rho},
          {"window_s", cfg_.watchdog.window_s}});
    if (d.verdict == opt::WatchdogVerdict::rolled_back && !d.inverse.empty())
    {
        push(d.inverse, {{"source", "watchdog"}, {"rollback_of", watchdog_txn_}}, true, d.rollback_txn);
    }
}

std::string
Platform::optimize_now()
{
    return optimize_now(cfg_.optimize);
}

std::string
Platform::create_job(JobKind kind, nlohmann::json input)
{
    const auto job = jobs_->create(kind, std::move(input), session_.now_ms());
    emit("JOB_QUEUED", {{"job_id", job.id}, {"kind", job_kind_name(kind)}});
    return job.id;
}

void
Platform::start_job(const std::string& job_id)
{
    const auto job = jobs_->start(job_id);
    emit("JOB_STARTED", {{"job_id", job_id}, {"kind", job_kind_name(job.kind)}});
}

void
Platform::finish_job(const std::string& job_id, nlohmann::json result)
{
    const auto job = jobs_->finish(job_id, std::move(result), session_.now_ms());
    emit("JOB_DONE", {{"job_id", job_id}, {"kind", job_kind_name(job.kind)}, {"txn_id", job_to_json(job).at("txn_id")}});
}

void
Platform::fail_job(const std::string& job_id, const std::string& code, const std::string& message, nlohmann::json detail)
{
    nlohmann::json err{{"code", code}, {"message", message}, {"detail", std::move(detail)}};
    const auto job = jobs_->fail(job_id, err, session_.now_ms());
    emit("JOB_FAILED", {{"job_id", job_id}, {"kind", job_kind_name(job.kind)}, {"error", err}});
}

std::string
Platform::begin_optimize(const OptimizeSettings& settings)
{
    return create_job(JobKind::optimize, settings_to_json(settings));
}

std::string
Platform::optimize_now(const OptimizeSettings& settings)
{
    const auto id = begin_optimize(settings);
    start_job(id);
    try
    {
        const auto graph = store().read();
        auto outcome = run_optimization(opt::scenario_from_twin(*graph, cfg_.session.sync.tier), settings,
                                        cfg_.utility, cfg_.gate, search_seed());
        outcome.twin_snapshot = twin::snapshot(*graph);
        finish_optimize(id, outcome, cfg_.closed_loop);
    }
    catch (const opt::OptimizerError& e)
    {
        fail_job(id, e.code(), e.what(), e.detail());
    }
    catch (const twin::TwinError& e)
    {
        fail_job(id, "conflict", e.what(), nlohmann::json::object());
    }
    return id;
}

void
Platform::finish_optimize(const std::string& job_id, const OptimizeOutcome& o, bool push_accepted)
{
    emit("OPTIMIZE_DONE",
         {{"job_id", job_id},
          {"method", optimize_method_name(o.settings.method)},
          {"utility_base", o.utility_base},
          {"utility_best", o.utility_best},
          {"evaluations", o.evaluations},
          {"changes", change_set_to_json(o.changes)}});
    auto gate = gate_summary(o.gate);
    gate["job_id"] = job_id;
    emit("GATE_DECISION", gate);

    nlohmann::json txn = nullptr;
    std::string skipped;
    if (o.gate.accepted && push_accepted)
    {
        if (auto busy = inflight_txn())
        {
            skipped = "conflict";
        }
        else
        {
            txn = push(o.changes, {{"source", "optimize"}, {"job_id", job_id}});
            jobs_->set_txn(job_id, txn.get<std::string>());
        }
    }
    else if (o.gate.accepted)
    {
        skipped = "open_loop";
    }
    if (!o.qtable.is_null())
    {
        qtable_ = o.qtable;
    }

    finish_job(job_id,
               {{"search", o.search},
                {"gate", opt::gate_decision_to_json(o.gate)},
                {"txn_id", txn},
                {"push_skipped", skipped.empty() ? nlohmann::json(nullptr) : nlohmann::json(skipped)}});

    optimization_ = {{"job_id", job_id},
                     {"t_ms", session_.now_ms()},
                     {"method", optimize_method_name(o.settings.method)},
                     {"twin_version", o.twin_version},
                     {"t0_ms", o.t0_ms},
                     {"utility_base", o.utility_base},
                     {"utility_best", o.utility_best},
                     {"evaluations", o.evaluations},
                     {"search_seeds", o.search.value("seeds", nlohmann::json::array())},
                     {"changes", change_set_to_json(o.changes)},
                     {"gate", opt::gate_decision_to_json(o.gate)},
                     {"txn_id", txn},
                     {"tier", twin::tier_name(cfg_.session.sync.tier)},
                     {"utility_spec", cfg_.utility},
                     {"twin_snapshot", o.twin_snapshot}};
}

nlohmann::json
Platform::report() const
{
    if (end_ms() == 0)
    {
        return nlohmann::json::object();
    }
    const auto now = session_.now_ms();
    const auto& twin = session_.twin();
    const auto& aot = twin.aot();
    const auto& c = twin.counters();

    nlohmann::json fid = nlohmann::json::array();
    double fid_sum = 0.0;
    for (const auto& f : fidelity_)
    {
        fid.push_back({{"t_start_s", f.t_start_s}, {"t_end_s", f.t_end_s}, {"score", f.score}});
        fid_sum += f.score;
    }

    nlohmann::json opt_section = nullptr;
    nlohmann::json utility = nullptr;
    if (!optimization_.is_null())
    {
        opt_section = optimization_;
        opt_section.erase("twin_snapshot");
        opt_section.erase("utility_spec");
        opt_section.erase("gate");
        const auto& g = optimization_.at("gate");
        opt_section["gate"] = {{"accepted", g.at("accepted")},
                               {"reason", g.at("reason")},
                               {"mean_improvement", g.at("mean_improvement")},
                               {"seeds", g.at("report").at("seeds")},
                               {"horizon_s", g.at("report").at("horizon_s")},
                               {"utility_before", g.at("report").at("utility_before")},
                               {"utility_after", g.at("report").at("utility_after")}};
        utility = {{"predicted_before", g.at("report").at("utility_before")},
                   {"predicted_after", g.at("report").at("utility_after")},
                   {"measured_before", nullptr},
                   {"measured_after", nullptr}};
        const auto& tx = optimization_.at("txn_id");
        if (tx.is_string())
        {
            const auto& t = txns_.at(tx.get<std::string>());
            opt_section["apply_status"] = sync::push_status_name(t.status);
            opt_section["applied_t_ms"] = t.applied_t_ms ? nlohmann::json(*t.applied_t_ms) : nlohmann::json(nullptr);
        }
        if (watchdog_decision_)
        {
            opt_section["watchdog"] = {{"verdict", opt::watchdog_verdict_name(watchdog_decision_->verdict)},
                                       {"baseline", watchdog_decision_->baseline},
                                       {"post", watchdog_decision_->post},
                                       {"rollback_txn", watchdog_decision_->rollback_txn.empty()
                                                            ? nlohmann::json(nullptr)
                                                            : nlohmann::json(watchdog_decision_->rollback_txn)}};
            utility["measured_before"] = watchdog_decision_->baseline;
            utility["measured_after"] = watchdog_decision_->post;
        }
        else
        {
            opt_section["watchdog"] = watchdog_.armed() ? nlohmann::json("armed") : nlohmann::json(nullptr);
        }
        opt_section["manual_intervention"] = watchdog_.manual_intervention();
    }

    nlohmann::json txns = nlohmann::json::array();
    for (const auto& id : txn_order_)
    {
        const auto& t = txns_.at(id);
        txns.push_back({{"txn_id", id},
                        {"job_id", t.job_id},
                        {"rollback", t.rollback},
                        {"status", sync::push_status_name(t.status)},
                        {"cells", t.changes.size()}});
    }

    std::uint64_t h = fnv1a64("");
    for (const auto& e : events_)
    {
        h = fnv1a64(event_line(e), h);
        h = fnv1a64("\n", h);
    }

    double kpi_utility_sum = 0.0;
    for (const auto& k : kpi_windows_)
    {
        kpi_utility_sum += opt::utility(k, cfg_.utility);
    }

    return {{"seed", cfg_.topology.seed},
            {"duration_s", cfg_.duration_s},
            {"t_end_ms", now},
            {"twinning_rate_hz", cfg_.session.sync.twinning_rate_hz},
            {"tier", twin::tier_name(cfg_.session.sync.tier)},
            {"topology", {{"sites", cfg_.topology.sites.size()}, {"cells", cfg_.topology.cells.size()}, {"ue_count", ue_count()}}},
            {"aot",
             {{"mean_s", aot.time_avg_mean_s(now)},
              {"max_s", aot.peak_max_s(now)},
              {"final_mean_s", aot.mean_s(now)},
              {"final_max_s", aot.max_s(now)}}},
            {"fidelity",
             {{"windows", fid},
              {"mean", fidelity_.empty() ? nlohmann::json(nullptr) : nlohmann::json(fid_sum / fidelity_.size())}}},
            {"kpi",
             {{"windows", kpi_windows_.size()},
              {"window_s", cfg_.kpi_window_s},
              {"mean_utility",
               kpi_windows_.empty() ? nlohmann::json(nullptr)
                                    : nlohmann::json(kpi_utility_sum / static_cast<double>(kpi_windows_.size()))}}},
            {"sync",
             {{"deltas_applied", c.deltas_applied},
              {"deltas_discarded", c.deltas_discarded},
              {"stale_frames", c.stale_frames},
              {"gaps", c.gaps},
              {"snapshot_requests", c.snapshot_requests},
              {"snapshots_applied", c.snapshots_applied},
              {"snapshot_checks", session_.snapshot_checks()},
              {"snapshot_mismatches", session_.snapshot_mismatches()},
              {"acks_received", c.acks_received},
              {"downlink", {{"sent", session_.downlink().stats().sent}, {"dropped", session_.downlink().stats().dropped}}},
              {"uplink", {{"sent", session_.uplink().stats().sent}, {"dropped", session_.uplink().stats().dropped}}}}},
            {"optimization", opt_section},
            {"utility", utility},
            {"transactions", txns},
            {"events", {{"count", events_.size()}, {"hash", h}}}};
}

std::string
kpi_csv(const std::vector<KpiWindow>& windows)
{
    std::string out = kpi_csv_header() + "\n";
    for (const auto& k : windows)
    {
        out += kpi_csv_row(k) + "\n";
    }
    return out;
}

namespace {

void
write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
}

} // namespace

void
write_run_artifacts(const Platform& p, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", p.report().dump(2) + "\n");
    std::string events;
    for (const auto& e : p.events())
    {
        events += event_line(e);
        events += '\n';
    }
    write_file(dir / "events.ndjson", events);
    write_file(dir / "kpis.csv", kpi_csv(p.kpi_windows()));
    if (!p.optimization().is_null())
    {
        write_file(dir / "optimization.json", p.optimization().dump(2) + "\n");
    }
    if (!p.last_qtable().is_null())
    {
        write_file(dir / "qtable.json", p.last_qtable().dump(2) + "\n");
    }
}

} // namespace dtran::platform

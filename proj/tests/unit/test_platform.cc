#include "dtran/platform.h"

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

using namespace dtran;
using namespace dtran::platform;

namespace {

sync::ChannelSpec
lossless(std::uint64_t seed)
{
    sync::ChannelSpec c;
    c.drop_prob = 0.0;
    c.latency_ms = 50;
    c.jitter_ms = 0;
    c.seed = seed;
    return c;
}

PlatformConfig
short_run(double duration_s, std::uint64_t seed = 42)
{
    PlatformConfig c;
    c.topology = default_desk_topology(seed);
    c.session = default_session(seed);
    c.duration_s = duration_s;
    return c;
}

PlatformConfig
two_cell_run(double duration_s)
{
    PlatformConfig c;
    c.topology = two_cell_topology();
    c.session = default_session(c.topology.seed);
    c.session.downlink = lossless(1);
    c.session.uplink = lossless(2);
    c.duration_s = duration_s;
    c.optimize.method = OptimizeMethod::local;
    c.optimize.at_s = 20.0;
    return c;
}

std::string
event_log(const Platform& p)
{
    std::string s;
    for (const auto& e : p.events())
    {
        s += event_line(e) + "\n";
    }
    return s;
}

std::filesystem::path
temp_dir(const std::string& name)
{
    auto d = std::filesystem::temp_directory_path() / ("dtran_test_" + name);
    std::filesystem::remove_all(d);
    return d;
}

std::vector<const Event*>
of_type(const Platform& p, const std::string& type)
{
    std::vector<const Event*> out;
    for (const auto& e : p.events())
    {
        if (e.type == type)
        {
            out.push_back(&e);
        }
    }
    return out;
}

} // namespace

TEST_CASE("platform config")
{
    SUBCASE("round trip of the defaults")
    {
        const PlatformConfig c = short_run(300.0);
        const auto j = platform_config_to_json(c);
        const auto back = platform_config_from_json(j, c);
        CHECK(platform_config_to_json(back) == j);
        CHECK(j.at("twinning_rate_hz") == 1.0);
        CHECK(j.at("tier") == "L2");
        CHECK(j.at("gate").at("delta") == 0.02);
        CHECK(j.at("gate").at("replications") == 5);
        CHECK(j.at("watchdog").at("window_s") == 30.0);
        CHECK(j.at("watchdog").at("rho") == 0.1);
        CHECK(j.at("optimize").at("method") == "none");
        CHECK(j.at("optimize").at("at_s").is_null());
    }
    SUBCASE("overlay keeps unspecified fields")
    {
        const auto c = platform_config_from_json({{"twinning_rate_hz", 5.0}, {"optimize", {{"method", "qlearn"}}}},
                                                 short_run(100.0));
        CHECK(c.session.sync.twinning_rate_hz == 5.0);
        CHECK(c.optimize.method == OptimizeMethod::qlearn);
        CHECK(c.duration_s == 100.0);
        CHECK(c.optimize.qlearn.episodes == 200);
    }
    SUBCASE("shared channel spec keeps distinct directions")
    {
        const auto c = platform_config_from_json({{"channel", {{"both", {{"drop_prob", 0.2}}}}}}, short_run(10.0));
        CHECK(c.session.downlink.drop_prob == 0.2);
        CHECK(c.session.uplink.drop_prob == 0.2);
        CHECK(c.session.downlink.seed != c.session.uplink.seed);
    }
    SUBCASE("bad documents")
    {
        CHECK_THROWS_AS(platform_config_from_json({{"twinning_rte_hz", 1.0}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"twinning_rate_hz", 11.0}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"twinning_rate_hz", "fast"}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"tier", "L3"}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"kpi_window_s", 7.0}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"optimize", {{"params", {"azimuth"}}}}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"watchdog", {{"rho", 1.5}}}}), std::invalid_argument);
        CHECK_THROWS_AS(platform_config_from_json({{"channel", {{"downlink", {{"drop_prob", 2.0}}}}}}),
                        std::invalid_argument);
        CHECK_THROWS_AS(load_platform_config("/nonexistent/config.json"), std::invalid_argument);
    }
}

TEST_CASE("job store")
{
    const auto dir = temp_dir("jobs");
    JobStore store(dir);
    const auto j = store.create(JobKind::whatif, {{"x", 1}}, 100);
    CHECK(j.id == "job-1");
    CHECK(j.status == JobStatus::queued);
    CHECK(store.create(JobKind::apply, {}, 100).id == "job-2");

    store.start(j.id);
    CHECK_THROWS_AS(store.start(j.id), std::logic_error);
    store.finish(j.id, {{"answer", 42}}, 250);
    CHECK_THROWS_AS(store.fail(j.id, {}, 300), std::logic_error);
    CHECK_THROWS_AS(store.start("job-99"), std::out_of_range);

    const auto got = store.get(j.id);
    REQUIRE(got);
    CHECK(got->status == JobStatus::done);
    CHECK(got->result.at("answer") == 42);
    CHECK(*got->finished_ms == 250);

    std::ifstream in(dir / "jobs" / "job-1.json");
    const auto on_disk = nlohmann::json::parse(in);
    CHECK(on_disk == job_to_json(*got));
    CHECK(on_disk.at("status") == "done");
    CHECK(store.all().size() == 2);

    store.fail("job-2", {{"code", "timeout"}}, 400);
    CHECK(store.get("job-2")->status == JobStatus::failed);
}

TEST_CASE("events")
{
    Event e;
    e.seq = 3;
    e.type = "METRICS";
    e.t_ms = 1000;
    e.twin_version = 7;
    e.data = {{"a", 1}};
    CHECK(event_from_json(event_to_json(e)).data == e.data);
    CHECK(event_line(event_from_json(nlohmann::json::parse(event_line(e)))) == event_line(e));
    CHECK_THROWS_AS(event_from_json({{"seq", 1}}), std::invalid_argument);
}

TEST_CASE("zero duration is an empty run")
{
    Platform p(short_run(0.0));
    p.run();
    CHECK(p.finished());
    CHECK(p.events().empty());
    CHECK(p.report() == nlohmann::json::object());
    CHECK(kpi_csv(p.kpi_windows()) == kpi_csv_header() + "\n");
}

TEST_CASE("stream shape")
{
    Platform p(short_run(31.0));
    p.run();
    const auto& ev = p.events();
    REQUIRE(!ev.empty());
    CHECK(ev.front().type == "RUN_STARTED");
    CHECK(ev.back().type == "RUN_FINISHED");
    std::uint64_t version = 0;
    std::int64_t t = 0;
    for (std::size_t i = 0; i < ev.size(); ++i)
    {
        CHECK(ev[i].seq == i + 1);
        CHECK(ev[i].twin_version >= version);
        CHECK(ev[i].t_ms >= t);
        version = ev[i].twin_version;
        t = ev[i].t_ms;
    }

    SUBCASE("metrics at the twinning cadence and nothing config-related when idle")
    {
        const auto metrics = of_type(p, "METRICS");
        REQUIRE(metrics.size() == 31);
        for (std::size_t i = 0; i < metrics.size(); ++i)
        {
            CHECK(metrics[i]->t_ms == static_cast<std::int64_t>(1000 * (i + 1)));
            for (const char* k : {"twinning_rate_hz", "aot_mean_s", "aot_max_s", "fidelity_score", "tier"})
            {
                CHECK(metrics[i]->data.contains(k));
            }
        }
        std::set<std::string> types;
        for (const auto& e : ev)
        {
            types.insert(e.type);
        }
        CHECK(types == std::set<std::string>{"RUN_STARTED", "METRICS", "KPI_SAMPLES", "KPI_WINDOW", "RUN_FINISHED"});
    }
    SUBCASE("kpi windows replay from the samples in stream order")
    {
        std::vector<SimRecord> records;
        std::size_t windows = 0;
        for (const auto& e : ev)
        {
            if (e.type == "KPI_SAMPLES")
            {
                for (const auto& r : e.data.at("records"))
                {
                    records.push_back(record_from_json(r));
                }
            }
            if (e.type == "KPI_WINDOW")
            {
                const auto& w = e.data.at("window");
                const auto k = aggregate_kpis(records, w.at("t_start_s"), w.at("t_end_s"), w.at("ue_count"));
                CHECK(kpi_window_to_json(k) == w);
                CHECK(k == p.kpi_windows().at(windows));
                ++windows;
            }
        }
        CHECK(windows == 3);
    }
    SUBCASE("kpi series re-aggregates the twin history")
    {
        const auto s = p.kpi_series(10.0);
        REQUIRE(s.size() == 3);
        CHECK(s[0] == p.kpi_windows()[0]);
        CHECK(p.kpi_series(30.0).size() == 1);
        CHECK(p.kpi_series(40.0).empty());
    }
}

TEST_CASE("same seed gives byte-identical logs and reports")
{
    auto cfg = short_run(40.0);
    cfg.optimize.method = OptimizeMethod::local;
    cfg.optimize.budget_evals = 20;
    cfg.closed_loop = true;
    Platform a(cfg);
    Platform b(cfg);
    a.run();
    b.run();
    CHECK(event_log(a) == event_log(b));
    CHECK(a.report().dump() == b.report().dump());

    auto other = cfg;
    other.topology = default_desk_topology(43);
    other.session = default_session(43);
    Platform c(other);
    c.run();
    CHECK(event_log(c) != event_log(a));
}

TEST_CASE("closed loop on the two-cell instance")
{
    const auto dir = temp_dir("closed_loop");
    JobStore store(dir);
    auto cfg = two_cell_run(60.0);
    cfg.closed_loop = true;
    cfg.watchdog.window_s = 20.0;
    Platform p(cfg, &store);
    p.run();

    const auto& o = p.optimization();
    REQUIRE(!o.is_null());
    CHECK(o.at("gate").at("accepted") == true);
    REQUIRE(o.at("txn_id").is_string());
    const auto txn_id = o.at("txn_id").get<std::string>();
    const auto* t = p.txn(txn_id);
    REQUIRE(t);
    CHECK(t->status == sync::PushStatus::applied);

    SUBCASE("CONFIG_APPLIED precedes every post-apply KPI event")
    {
        std::size_t applied_at = 0;
        for (std::size_t i = 0; i < p.events().size(); ++i)
        {
            const auto& e = p.events()[i];
            if (e.type == "CONFIG_APPLIED" && e.data.at("txn_id") == txn_id)
            {
                applied_at = i;
            }
        }
        REQUIRE(applied_at > 0);
        for (std::size_t i = 0; i < applied_at; ++i)
        {
            const auto& e = p.events()[i];
            if (e.type == "KPI_SAMPLES")
            {
                CHECK(e.data.at("t_end_ms").get<std::int64_t>() <= *t->applied_t_ms);
            }
            if (e.type == "KPI_WINDOW")
            {
                CHECK(e.data.at("window").at("t_end_s").get<double>() * 1000.0 <= *t->applied_t_ms);
            }
        }
    }
    SUBCASE("the change is live and attributable")
    {
        const auto configs = p.twin_configs();
        for (const auto& c : change_set_from_json(o.at("changes")))
        {
            CHECK(configs.at(c.cell_id) == c.config);
            CHECK(p.session().world().config(c.cell_id) == c.config);
        }
        const auto job = store.get(t->job_id);
        REQUIRE(job);
        CHECK(job->kind == JobKind::apply);
        CHECK(job->txn_id == txn_id);
        CHECK(job->status == JobStatus::done);
        CHECK(std::filesystem::exists(dir / "jobs" / (t->job_id + ".json")));
        const auto opt_job = store.get(o.at("job_id").get<std::string>());
        REQUIRE(opt_job);
        CHECK(opt_job->kind == JobKind::optimize);
        CHECK(opt_job->status == JobStatus::done);
        CHECK(opt_job->txn_id == txn_id);
    }
    SUBCASE("watchdog keeps an improving change")
    {
        const auto wd = of_type(p, "WATCHDOG");
        REQUIRE(wd.size() == 1);
        CHECK(wd[0]->data.at("verdict") == "kept");
        CHECK(wd[0]->data.at("post").get<double>() > wd[0]->data.at("baseline").get<double>());
    }
    SUBCASE("recorded gate seeds reproduce the gate utilities")
    {
        const auto graph = twin::restore(o.at("twin_snapshot"));
        const auto s = opt::scenario_from_twin(graph, twin::FidelityTier::L2);
        opt::WhatIfRequest req;
        req.changes = change_set_from_json(o.at("changes"));
        req.horizon_s = o.at("gate").at("report").at("horizon_s");
        req.seeds = o.at("gate").at("report").at("seeds").get<std::vector<std::uint64_t>>();
        CHECK(req.seeds.size() == 5);
        const auto again = opt::whatif_report_to_json(opt::whatif(s, req, cfg.utility));
        CHECK(again.at("utility_before") == o.at("gate").at("report").at("utility_before"));
        CHECK(again.at("utility_after") == o.at("gate").at("report").at("utility_after"));
        CHECK(again.at("replications") == o.at("gate").at("report").at("replications"));
    }
    SUBCASE("artifacts")
    {
        const auto out = temp_dir("artifacts");
        write_run_artifacts(p, out);
        for (const char* f : {"report.json", "events.ndjson", "kpis.csv", "optimization.json"})
        {
            CHECK(std::filesystem::exists(out / f));
        }
        CHECK(!std::filesystem::exists(out / "qtable.json"));
        std::ifstream in(out / "events.ndjson");
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line))
        {
            CHECK(event_line(event_from_json(nlohmann::json::parse(line))) == line);
            ++n;
        }
        CHECK(n == p.events().size());
    }
}

TEST_CASE("open loop records the decision without pushing")
{
    auto cfg = two_cell_run(40.0);
    cfg.closed_loop = false;
    Platform p(cfg);
    p.run();
    CHECK(p.optimization().at("gate").at("accepted") == true);
    CHECK(p.optimization().at("txn_id").is_null());
    CHECK(of_type(p, "CONFIG_PUSHED").empty());
    CHECK(p.twin_configs() == cfg.topology.config_map());
}

TEST_CASE("q-learning run exposes its table")
{
    auto cfg = two_cell_run(30.0);
    cfg.optimize.method = OptimizeMethod::qlearn;
    cfg.optimize.qlearn.episodes = 10;
    Platform p(cfg);
    p.run();
    REQUIRE(!p.last_qtable().is_null());
    CHECK(p.last_qtable().at("states") == opt::kStateCount);
    CHECK(p.last_qtable().at("actions").size() == 4);
}

TEST_CASE("watchdog")
{
    auto cfg = two_cell_run(70.0);
    cfg.optimize.method = OptimizeMethod::none;
    cfg.watchdog.window_s = 20.0;

    SUBCASE("a harmful change is rolled back to the exact pre-apply map")
    {
        Platform p(cfg);
        p.run_until(10000);
        const auto before = p.twin_configs();
        ChangeSet bad;
        for (const auto& [id, c] : before)
        {
            auto worse = c;
            worse.tilt_deg = 15;
            worse.tx_power_dbm = 30;
            bad.push_back({id, worse});
        }
        const auto txn = p.push(bad, {{"source", "test"}});
        p.run();
        const auto wd = of_type(p, "WATCHDOG");
        REQUIRE(wd.size() == 1);
        CHECK(wd[0]->data.at("verdict") == "rolled_back");
        const auto* rb = p.txn(txn + "-rollback");
        REQUIRE(rb);
        CHECK(rb->rollback);
        CHECK(rb->status == sync::PushStatus::applied);
        CHECK(p.twin_configs() == before);
        CHECK(p.session().world().config_map() == before);
    }
    SUBCASE("a null change on a lossless link measures exactly its counterfactual")
    {
        Platform p(cfg);
        p.run_until(10000);
        ChangeSet same;
        for (const auto& [id, c] : p.twin_configs())
        {
            same.push_back({id, c});
        }
        p.push(same);
        p.run();
        const auto wd = of_type(p, "WATCHDOG");
        REQUIRE(wd.size() == 1);
        CHECK(wd[0]->data.at("verdict") == "kept");
        CHECK(wd[0]->data.at("post") == wd[0]->data.at("baseline"));
    }
    SUBCASE("a rollback that times out raises an alarm")
    {
        auto dead = cfg;
        dead.session.uplink.drop_prob = 1.0;
        dead.session.sync.push_timeout_ms = 2000;
        Platform p(dead);
        p.run_until(5000);
        const auto txn = p.push({{1, p.twin_configs().at(1)}}, {}, true, std::string("txn-x-rollback"));
        p.run_until(9000);
        CHECK(p.txn(txn)->status == sync::PushStatus::timeout);
        const auto alarms = of_type(p, "ALARM");
        REQUIRE(alarms.size() == 1);
        CHECK(alarms[0]->data.at("manual_intervention") == true);
        CHECK(of_type(p, "PUSH_TIMEOUT").size() == 1);
    }
    SUBCASE("transaction ids are unique")
    {
        Platform p(cfg);
        p.run_until(1000);
        p.push({}, {}, false, std::string("t"));
        CHECK_THROWS_AS(p.push({}, {}, false, std::string("t")), opt::OptimizerError);
    }
}

TEST_CASE("KPI events wait for an unresolved push")
{
    for (std::uint64_t seed : {1, 2, 3, 4})
    {
        auto cfg = two_cell_run(40.0);
        cfg.optimize.method = OptimizeMethod::none;
        cfg.session.downlink.drop_prob = 0.4;
        cfg.session.downlink.seed = seed;
        Platform p(cfg);
        p.run_until(10000);
        ChangeSet c{{1, p.twin_configs().at(1)}};
        c[0].config.tilt_deg = 3;
        const auto txn = p.push(c);
        p.run();
        const auto* t = p.txn(txn);
        REQUIRE(t);
        if (t->status != sync::PushStatus::applied)
        {
            continue;
        }
        bool seen_applied = false;
        for (const auto& e : p.events())
        {
            if (e.type == "CONFIG_APPLIED")
            {
                seen_applied = true;
            }
            if (e.type == "KPI_SAMPLES" && e.data.at("t_end_ms").get<std::int64_t>() > *t->applied_t_ms)
            {
                CHECK(seen_applied);
            }
        }
        CHECK(seen_applied);
    }
}

TEST_CASE("fidelity is exact with per-tick lossless twinning at L2")
{
    auto cfg = short_run(121.0);
    cfg.session.sync.twinning_rate_hz = 10.0;
    cfg.session.downlink = lossless(1);
    cfg.session.uplink = lossless(2);
    Platform p(cfg);
    p.run();
    REQUIRE(p.fidelity_windows().size() == 2);
    for (const auto& f : p.fidelity_windows())
    {
        CHECK(f.score == 1.0);
        CHECK(f.predicted == f.actual);
    }
    CHECK(p.metrics().fidelity_score == 1.0);
}

TEST_CASE("an L0 twin has no what-if and no fidelity")
{
    auto cfg = short_run(70.0);
    cfg.session.sync.tier = twin::FidelityTier::L0;
    cfg.optimize.method = OptimizeMethod::local;
    cfg.optimize.at_s = 5.0;
    Platform p(cfg);
    p.run();
    CHECK(p.fidelity_windows().empty());
    CHECK_THROWS_AS(p.scenario(), opt::OptimizerError);
    const auto failed = of_type(p, "JOB_FAILED");
    REQUIRE(failed.size() == 1);
    CHECK(failed[0]->data.at("error").at("code") == "unsupported_tier");
}

TEST_CASE("default 300 s run with local search never predicts a loss it accepts")
{
    auto cfg = short_run(300.0);
    cfg.optimize.method = OptimizeMethod::local;
    Platform p(cfg);
    p.run();
    const auto& o = p.optimization();
    REQUIRE(!o.is_null());
    const auto& g = o.at("gate");
    if (g.at("accepted").get<bool>())
    {
        CHECK(g.at("report").at("utility_after").get<double>() >= g.at("report").at("utility_before").get<double>());
    }
    const auto r = p.report();
    CHECK(r.at("optimization").at("gate").at("accepted") == g.at("accepted"));
}
